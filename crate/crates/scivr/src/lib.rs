//! Campaign runner for the semiclassical spectrum engine: TOML run
//! configurations, the parallel trajectory pipeline, text artifacts and
//! cross-method tables. Numerics live in `scivr_core`.

// `!(x > 0.0)` style tests are used on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundled;
pub mod compare;
pub mod config;
mod error;
pub mod io;
pub mod run;
pub mod transform;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use run::{run, RunOptions, RunReport, RunSummary, Status};
