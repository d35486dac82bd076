use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scivr::config::RunConfig;
use scivr::io::{read_spectrum, write_report};
use scivr::{bundled, compare, run, Error, RunOptions, RunSummary};
use scivr_core::dvr::{dvr_converged, dvr_solve_with, overlap_with_reference};
use scivr_core::spectrum::{find_peaks_with, PeakCriteria};

#[derive(Parser)]
#[command(
    name = "scivr",
    version,
    about = "Semiclassical IVR vibrational spectra of model potentials"
)]
struct Cli {
    /// Override the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration (a file or a bundled name) and write its artifacts.
    Run { config: String },
    /// Run several configurations and print a cross-method table.
    Compare {
        #[arg(required = true)]
        configs: Vec<String>,
    },
    /// Solve the DVR reference problem of a configuration.
    Dvr { config: String },
    /// Detect peaks in a spectrum file.
    Peaks {
        file: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        min_height_fraction: f64,
        #[arg(long, default_value_t = 0.0)]
        min_prominence_fraction: f64,
        #[arg(long, default_value_t = 0.0)]
        min_separation: f64,
    },
    /// List or print the bundled configurations.
    Bundled { name: Option<String> },
}

fn load(arg: &str, cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = if Path::new(arg).exists() {
        RunConfig::from_file(Path::new(arg))?
    } else {
        match bundled::load(arg) {
            Some(c) => c?,
            None => {
                return Err(Error::Config {
                    path: "config".into(),
                    message: format!("no file or bundled config named '{arg}'"),
                })
            }
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.display().to_string();
    }
    Ok(cfg)
}

fn execute(cfg: &RunConfig, cli: &Cli) -> Result<RunSummary, Error> {
    let mut report = run(
        cfg,
        &RunOptions {
            threads: cli.threads,
        },
    )?;
    let written = write_report(&mut report, Path::new(&cfg.output.dir))?;
    for s in &report.summary.spectra {
        match (&s.status, s.zpe, s.mae) {
            (scivr::Status::Ok, zpe, mae) => eprintln!(
                "{:<22} zpe {:>12} mae {:>10} truncated {:5.1}%",
                s.label,
                zpe.map_or("-".into(), |z| format!("{z:.4}")),
                mae.map_or("-".into(), |m| format!("{m:.4}")),
                100.0 * s.truncated_fraction
            ),
            (status, _, _) => eprintln!(
                "{:<22} {:?}: {}",
                s.label,
                status,
                s.reason.as_deref().unwrap_or("")
            ),
        }
    }
    eprintln!("wrote {} files to {}", written.len(), cfg.output.dir);
    Ok(report.summary)
}

fn main_inner(cli: &Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config, cli)?;
            let summary = execute(&cfg, cli)?;
            Ok(if summary.all_inapplicable() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Compare { configs } => {
            let cfgs = configs
                .iter()
                .map(|c| load(c, cli))
                .collect::<Result<Vec<_>, _>>()?;
            let mut summaries = Vec::new();
            for c in &cfgs {
                summaries.push(execute(c, cli)?);
            }
            print!("{}", compare::compare_methods(&summaries)?);
            Ok(if summaries.iter().all(|s| s.all_inapplicable()) {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Dvr { config } => {
            let cfg = load(config, cli)?;
            let spec = cfg.pes_spec()?;
            let grid = cfg.dvr_grid()?;
            let opts = cfg.dvr_options(true);
            let sol = match &cfg.dvr {
                Some(d) if d.check_convergence => dvr_converged(&spec, &grid, &opts, d.tol)?,
                _ => dvr_solve_with(&spec, &grid, &opts)?,
            };
            let chi = cfg.reference_state()?;
            let unit = cfg.unit();
            println!("# state energy[{}] overlap2 residual", unit.name());
            for (i, e) in sol.energies.iter().enumerate() {
                let w = match &sol.vectors {
                    Some(v) => overlap_with_reference(&v[i], &chi, &sol.grid)?,
                    None => f64::NAN,
                };
                println!(
                    "{i} {:.8} {:.6e} {:.2e}",
                    unit.from_hartree(*e),
                    w,
                    sol.residuals[i]
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Peaks {
            file,
            min_height_fraction,
            min_prominence_fraction,
            min_separation,
        } => {
            let (e, y, unit) = read_spectrum(file)?;
            let criteria = PeakCriteria {
                min_height_fraction: *min_height_fraction,
                min_prominence_fraction: *min_prominence_fraction,
                min_separation: *min_separation,
            };
            let table = find_peaks_with(&e, &y, &criteria);
            println!("# energy[{}] height", unit.name());
            for p in &table.peaks {
                println!("{:.8} {:.6e}", p.energy, p.height);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bundled { name } => {
            match name {
                None => bundled::NAMES.iter().for_each(|n| println!("{n}")),
                Some(n) => match bundled::text(n) {
                    Some(t) => print!("{t}"),
                    None => {
                        return Err(Error::Config {
                            path: "bundled".into(),
                            message: format!("unknown bundled config '{n}'"),
                        })
                    }
                },
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
