//! Text artifacts: spectra, peak reports, summaries and the config echo.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use scivr_core::spectrum::SpectrumGrid;
use scivr_core::units::CM1_TO_HARTREE;

use crate::config::EnergyUnit;
use crate::error::{Error, Result};
use crate::run::{RunReport, RunSummary, Status};

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Two-column spectrum text with `#` metadata lines.
pub fn format_spectrum(s: &SpectrumGrid, run_label: &str, unit: EnergyUnit) -> String {
    let m = &s.meta;
    let mut out = String::new();
    let _ = writeln!(out, "# run = {run_label}");
    let _ = writeln!(out, "# spectrum = {}", m.method);
    let _ = writeln!(out, "# estimator = {}", m.estimator);
    let _ = writeln!(out, "# ensemble = {}", m.ensemble);
    let _ = writeln!(out, "# contributing = {}", m.contributing);
    let _ = writeln!(out, "# t_max = {}", m.t_max);
    let _ = writeln!(out, "# seed = {}", m.seed);
    let _ = writeln!(out, "# energy_unit = {}", unit.name());
    let _ = writeln!(out, "# cm1_to_hartree = {CM1_TO_HARTREE}");
    let _ = writeln!(out, "# energy intensity");
    for (e, i) in s.energies.iter().zip(&s.intensity) {
        let _ = writeln!(out, "{:.10e} {:.10e}", unit.from_hartree(*e), i);
    }
    out
}

/// Reads a spectrum written by [`format_spectrum`] (or any two-column
/// file). Energies come back in the file's own unit.
pub fn read_spectrum(path: &Path) -> Result<(Vec<f64>, Vec<f64>, EnergyUnit)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, msg: &str| Error::Format {
        path: path.display().to_string(),
        message: format!("line {line}: {msg}"),
    };
    let mut unit = EnergyUnit::Hartree;
    let (mut e, mut y) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.split_once('=') {
                if k.trim() == "energy_unit" {
                    unit = match v.trim() {
                        "hartree" => EnergyUnit::Hartree,
                        "cm-1" => EnergyUnit::Wavenumber,
                        other => return Err(bad(i + 1, &format!("unknown energy unit '{other}'"))),
                    };
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split_whitespace().map(str::parse::<f64>);
        match (cols.next(), cols.next()) {
            (Some(Ok(a)), Some(Ok(b))) => {
                e.push(a);
                y.push(b);
            }
            _ => return Err(bad(i + 1, "expected two numeric columns")),
        }
    }
    if e.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(bad(0, "energies must increase strictly"));
    }
    Ok((e, y, unit))
}

/// Peak positions and MAE of every spectrum of a run.
pub fn format_peaks(summary: &RunSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# run = {}", summary.label);
    let _ = writeln!(out, "# energy_unit = {}", summary.energy_unit);
    for s in &summary.spectra {
        match s.status {
            Status::Ok => {
                let mae = s.mae.map_or("undefined".to_string(), |m| format!("{m:.6}"));
                let _ = writeln!(
                    out,
                    "# {} mae = {} paired = {} unpaired_references = {}",
                    s.label,
                    mae,
                    s.assignments.len(),
                    s.unpaired_references.len()
                );
            }
            _ => {
                let _ = writeln!(
                    out,
                    "# {} {:?}: {}",
                    s.label,
                    s.status,
                    s.reason.as_deref().unwrap_or("")
                );
            }
        }
    }
    let _ = writeln!(out, "# spectrum energy height");
    for s in &summary.spectra {
        for (e, h) in s.peaks.iter().zip(&s.heights) {
            let _ = writeln!(out, "{} {:.8} {:.6e}", s.label, e, h);
        }
    }
    out
}

/// Writes every artifact of `report` into `dir` and returns the paths.
/// Spectrum file names are recorded in the summary.
pub fn write_report(report: &mut RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let label = report.summary.label.clone();
    let unit = report.config.unit();
    let mut written = Vec::new();
    for (outcome, grid) in report.summary.spectra.iter_mut().zip(&report.spectra) {
        if let Some(g) = grid {
            let name = format!("{label}.{}.spectrum.dat", outcome.label);
            let path = dir.join(&name);
            write(&path, &format_spectrum(g, &label, unit))?;
            outcome.file = Some(name);
            written.push(path);
        }
    }
    let path = dir.join(format!("{label}.peaks.dat"));
    write(&path, &format_peaks(&report.summary))?;
    written.push(path);
    let path = dir.join(format!("{label}.config.toml"));
    write(&path, &report.config.to_toml())?;
    written.push(path);
    for (i, table) in &report.dumps {
        let path = dir.join(format!("{label}.traj{i}.dat"));
        write(&path, table)?;
        written.push(path);
    }
    let path = dir.join(format!("{label}.summary.toml"));
    write(&path, &report.summary.to_toml())?;
    written.push(path);
    Ok(written)
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use scivr_core::spectrum::SpectrumMeta;

    #[test]
    fn spectrum_round_trip() {
        let grid = SpectrumGrid::new(
            vec![0.5, 0.75, 1.0],
            vec![0.1, 2.5, 0.3],
            SpectrumMeta {
                method: "rt3".into(),
                estimator: "ta".into(),
                ..Default::default()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.dat");
        fs::write(&path, format_spectrum(&grid, "x", EnergyUnit::Wavenumber)).unwrap();
        let (e, y, unit) = read_spectrum(&path).unwrap();
        assert_eq!(unit, EnergyUnit::Wavenumber);
        assert_eq!(y, grid.intensity);
        for (a, b) in e.iter().zip(&grid.energies) {
            // eleven significant digits on disk
            assert!((a * CM1_TO_HARTREE - b).abs() < 1e-10 * b);
        }
    }

    #[test]
    fn malformed_spectrum_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.dat");
        fs::write(&path, "# energy_unit = hartree\n1.0 2.0\n0.5 1.0\n").unwrap();
        assert!(matches!(read_spectrum(&path), Err(Error::Format { .. })));
        fs::write(&path, "1.0 abc\n").unwrap();
        assert!(matches!(read_spectrum(&path), Err(Error::Format { .. })));
    }
}
