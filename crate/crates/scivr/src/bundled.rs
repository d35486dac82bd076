//! Configurations shipped with the crate, one per reproduced experiment.

use crate::config::RunConfig;
use crate::error::Result;

pub const NAMES: &[&str] = &[
    "harmonic_sanity",
    "hh_soft_ta_exact",
    "hh_soft_ta",
    "hh_soft_hk",
    "hh_strong_ta_exact",
    "hh_strong_ta",
    "hh_strong_regularize",
    "morse_quartic_soft_ta",
    "morse_quartic_strong_ta",
];

pub fn text(name: &str) -> Option<&'static str> {
    Some(match name {
        "harmonic_sanity" => include_str!("../configs/harmonic_sanity.toml"),
        "hh_soft_ta_exact" => include_str!("../configs/hh_soft_ta_exact.toml"),
        "hh_soft_ta" => include_str!("../configs/hh_soft_ta.toml"),
        "hh_soft_hk" => include_str!("../configs/hh_soft_hk.toml"),
        "hh_strong_ta_exact" => include_str!("../configs/hh_strong_ta_exact.toml"),
        "hh_strong_ta" => include_str!("../configs/hh_strong_ta.toml"),
        "hh_strong_regularize" => include_str!("../configs/hh_strong_regularize.toml"),
        "morse_quartic_soft_ta" => include_str!("../configs/morse_quartic_soft_ta.toml"),
        "morse_quartic_strong_ta" => include_str!("../configs/morse_quartic_strong_ta.toml"),
        _ => return None,
    })
}

/// Parsed bundled configuration, `None` for an unknown name.
pub fn load(name: &str) -> Option<Result<RunConfig>> {
    text(name).map(RunConfig::from_toml)
}
