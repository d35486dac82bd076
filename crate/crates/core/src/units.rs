//! Unit conventions.

/// Reduced Planck constant in atomic units.
pub const HBAR: f64 = 1.0;

/// Hartree per wavenumber.
pub const CM1_TO_HARTREE: f64 = 4.556335e-6;

pub fn cm1_to_hartree(wavenumber: f64) -> f64 {
    wavenumber * CM1_TO_HARTREE
}

pub fn hartree_to_cm1(energy: f64) -> f64 {
    energy / CM1_TO_HARTREE
}
