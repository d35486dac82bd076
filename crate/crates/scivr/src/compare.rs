//! Cross-method tables: one row per reference level, one column per
//! spectrum, MAE in the footer.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::run::{RunSummary, Status};

const LEVEL_TOL: f64 = 1e-9;

/// Tab-separated comparison of every produced spectrum in `runs`. All runs
/// must share their reference levels.
pub fn compare_methods(runs: &[RunSummary]) -> Result<String> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Compare("no runs given".into()))?;
    let refs = &first.reference_levels;
    if refs.is_empty() {
        return Err(Error::Compare(format!(
            "run '{}' has no reference levels",
            first.label
        )));
    }
    for r in &runs[1..] {
        let same = r.energy_unit == first.energy_unit
            && r.reference_levels.len() == refs.len()
            && r.reference_levels
                .iter()
                .zip(refs)
                .all(|(a, b)| (a - b).abs() <= LEVEL_TOL * (1.0 + b.abs()));
        if !same {
            return Err(Error::Compare(format!(
                "runs '{}' and '{}' use different reference levels",
                first.label, r.label
            )));
        }
    }
    let prefix = runs.len() > 1;
    let mut columns = Vec::new();
    for r in runs {
        for s in r.spectra.iter().filter(|s| s.status == Status::Ok) {
            let name = if prefix {
                format!("{}:{}", r.label, s.label)
            } else {
                s.label.clone()
            };
            columns.push((name, s));
        }
    }
    if columns.is_empty() {
        return Err(Error::Compare("no run produced a spectrum".into()));
    }
    let mut out = String::from("exact");
    for (name, _) in &columns {
        let _ = write!(out, "\t{name}");
    }
    out.push('\n');
    // assignments are stored in reference order; several may share a level
    let mut cursor = vec![0usize; columns.len()];
    for &level in refs {
        let _ = write!(out, "{level:.6}");
        for (c, (_, s)) in columns.iter().enumerate() {
            let a = &s.assignments;
            match a.get(cursor[c]) {
                Some(pair) if (pair[0] - level).abs() <= LEVEL_TOL * (1.0 + level.abs()) => {
                    let _ = write!(out, "\t{:.6}", pair[1]);
                    cursor[c] += 1;
                }
                _ => out.push_str("\t-"),
            }
        }
        out.push('\n');
    }
    out.push_str("MAE");
    for (_, s) in &columns {
        match s.mae {
            Some(m) => {
                let _ = write!(out, "\t{m:.6}");
            }
            None => out.push_str("\t-"),
        }
    }
    out.push('\n');
    Ok(out)
}
