//! Trajectory-based semiclassical dynamics for vibrational power spectra.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every numerical
//! piece of the engine: analytic model potentials, symplectic propagation of
//! trajectories with their monodromy matrices, the family of Herman–Kluk
//! pre-exponential factors and their approximations, trajectory stability
//! policies, Monte Carlo spectrum estimators, and a sinc-DVR reference
//! eigensolver. IO, configuration and parallel orchestration live in the
//! `scivr` companion crate.
//!
//! Atomic units with ħ = 1 and unit masses are used throughout.

#![no_std]
// `!(x <= tol)` style tests are used on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod dvr;
pub mod dynamics;
mod error;
pub mod linalg;
pub mod pes;
pub mod prefactor;
pub mod spectrum;
pub mod stability;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64;
