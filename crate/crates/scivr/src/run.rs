//! Campaign runner: sampling, the per-trajectory pipeline, spectrum
//! assembly and the run summary.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use scivr_core::dvr::dvr_solve_with;
use scivr_core::dynamics::{propagate, PhasePoint, PropagateOptions, TrajectoryRecord};
use scivr_core::pes::PesSpec;
use scivr_core::prefactor::{self, PrefactorMethod, PrefactorSeries, PrefactorStop};
use scivr_core::spectrum::{
    find_peaks_with, mae_grouped, CoherentState, EnergyGrid, HkAccumulator, PeakCriteria,
    SpectrumGrid, SpectrumMeta, TaAccumulator, Window,
};
use scivr_core::stability::{first_det_rejection, first_kay_rejection, Regularization};
use scivr_core::units::HBAR;
use scivr_core::Complex64;

use crate::config::{EstimatorKind, PolicyKind, RunConfig};
use crate::error::{Error, Result};
use crate::transform::FftTransform;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; rayon's default when `None`.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// The method cannot be used on this input; see `reason`.
    Inapplicable,
    /// Every trajectory was rejected before its first point.
    Empty,
}

/// One spectrum of a run: a prefactor method, and for the monodromy-based
/// methods a stability policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOutcome {
    pub label: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub contributing: usize,
    /// Trajectories whose contribution ended before the last step.
    pub truncated: usize,
    pub truncated_fraction: f64,
    /// Trajectories on which the method itself broke down.
    pub failed: usize,
    pub branch_warnings: usize,
    pub held_steps: usize,
    /// Strongest peak within the pairing window of the lowest reference
    /// level, or the lowest peak when no references are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zpe: Option<f64>,
    pub peaks: Vec<f64>,
    pub heights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    /// (reference level, peak) pairs used for the MAE.
    pub assignments: Vec<[f64; 2]>,
    pub unpaired_references: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Statistics {
    /// Trajectories that left the bound region (non-finite state).
    pub escaped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub det_rejected_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kay_rejected_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tamed_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tamings: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub untamed_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub seed: u64,
    pub trajectories: usize,
    pub estimator: String,
    pub energy_unit: String,
    pub wall_time_s: f64,
    pub reference_levels: Vec<f64>,
    pub statistics: Statistics,
    pub spectra: Vec<SpectrumOutcome>,
}

impl RunSummary {
    pub fn spectrum(&self, label: &str) -> Option<&SpectrumOutcome> {
        self.spectra.iter().find(|s| s.label == label)
    }

    /// True when no requested spectrum could be produced.
    pub fn all_inapplicable(&self) -> bool {
        self.spectra.iter().all(|s| s.status != Status::Ok)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summary always serializes")
    }
}

/// Everything a run produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: RunConfig,
    pub summary: RunSummary,
    /// Parallel to `summary.spectra`; `None` where no spectrum exists.
    pub spectra: Vec<Option<SpectrumGrid>>,
    /// (trajectory index, text table) for the requested dumps.
    pub dumps: Vec<(usize, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Gate {
    /// Approximate methods: only divergence ends a contribution.
    Free,
    Off,
    Det(f64),
    Kay(f64),
    Regularize,
}

#[derive(Debug, Clone)]
struct Route {
    label: String,
    method: PrefactorMethod,
    gate: Gate,
    policy: Option<PolicyKind>,
}

fn uses_monodromy(m: PrefactorMethod) -> bool {
    matches!(
        m,
        PrefactorMethod::ExactMonodromy | PrefactorMethod::ExactLogDerivative
    )
}

fn routes(cfg: &RunConfig) -> Result<Vec<Route>> {
    let mut out = Vec::new();
    for m in cfg.methods()? {
        if uses_monodromy(m) {
            for &p in &cfg.stability.policies {
                let gate = match p {
                    PolicyKind::Off => Gate::Off,
                    PolicyKind::Det => Gate::Det(cfg.stability.det_tol),
                    PolicyKind::Kay => Gate::Kay(cfg.kay_threshold()),
                    PolicyKind::Regularize => Gate::Regularize,
                };
                out.push(Route {
                    label: format!("{}-{}", m.key(), p.key()),
                    method: m,
                    gate,
                    policy: Some(p),
                });
            }
        } else {
            out.push(Route {
                label: m.key(),
                method: m,
                gate: Gate::Free,
                policy: None,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Acc {
    Ta(TaAccumulator),
    Hk(HkAccumulator),
}

impl Acc {
    fn merge(&mut self, other: &Acc) {
        match (self, other) {
            (Acc::Ta(a), Acc::Ta(b)) => a.merge(b),
            (Acc::Hk(a), Acc::Hk(b)) => a.merge(b),
            _ => unreachable!("accumulator kinds never mix"),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct RouteCounters {
    truncated: usize,
    failed: usize,
    branch_warnings: usize,
    held_steps: usize,
}

#[derive(Debug, Clone, Default)]
struct TrajCounters {
    escaped: usize,
    tamed: usize,
    untamed: usize,
    max_tamings: u32,
}

struct Partial {
    acc: Vec<Acc>,
    routes: Vec<RouteCounters>,
    traj: TrajCounters,
    dumps: Vec<(usize, String)>,
}

impl Partial {
    fn merge(&mut self, o: Partial) {
        for (a, b) in self.acc.iter_mut().zip(&o.acc) {
            a.merge(b);
        }
        for (a, b) in self.routes.iter_mut().zip(&o.routes) {
            a.truncated += b.truncated;
            a.failed += b.failed;
            a.branch_warnings += b.branch_warnings;
            a.held_steps += b.held_steps;
        }
        self.traj.escaped += o.traj.escaped;
        self.traj.tamed += o.traj.tamed;
        self.traj.untamed += o.traj.untamed;
        self.traj.max_tamings = self.traj.max_tamings.max(o.traj.max_tamings);
        self.dumps.extend(o.dumps);
    }
}

struct Context<'a> {
    cfg: &'a RunConfig,
    spec: PesSpec,
    chi: CoherentState,
    grid: EnergyGrid,
    window: Window,
    tr: FftTransform,
    routes: Vec<Route>,
    omega0: Vec<f64>,
    central: Option<std::result::Result<PrefactorSeries, String>>,
    reg: Option<Regularization>,
}

impl Context<'_> {
    fn empty_partial(&self) -> Partial {
        let acc = self
            .routes
            .iter()
            .map(|_| match self.cfg.estimator.kind {
                EstimatorKind::Ta => Acc::Ta(TaAccumulator::new(&self.grid)),
                EstimatorKind::Hk => Acc::Hk(HkAccumulator::new(self.grid.nsteps)),
            })
            .collect();
        Partial {
            acc,
            routes: vec![RouteCounters::default(); self.routes.len()],
            traj: TrajCounters::default(),
            dumps: Vec::new(),
        }
    }

    fn process(&self, index: usize, part: &mut Partial) -> Result<()> {
        let cfg = self.cfg;
        let z0 = self.chi.sample(cfg.seed, index as u64);
        let density = self.chi.sampling_density(&z0);
        let (dt, nsteps) = (cfg.dynamics.dt, cfg.dynamics.nsteps);
        let traj = propagate(&self.spec, &z0, dt, nsteps, &PropagateOptions::default())?;
        let full = nsteps + 1;
        if traj.classical_truncation().is_some() {
            part.traj.escaped += 1;
        }
        let gamma = self.chi.gamma();
        // e^{iS/ħ}⟨χ|p_t q_t⟩ is shared by every method
        // an escaping trajectory may record an infinite action on its last point
        let base: Vec<Complex64> = (0..traj.len())
            .map(|k| {
                Complex64::from_polar(1.0, traj.action(k) / HBAR)
                    * self.chi.overlap(traj.q(k), traj.p(k))
            })
            .take_while(|z| z.is_finite())
            .collect();
        let hk_scale = self.chi.overlap(&z0.q, &z0.p).conj() / density;

        let tamed = match self.reg {
            Some(reg) => {
                let opts = PropagateOptions {
                    regularization: Some(reg),
                };
                let t = propagate(&self.spec, &z0, dt, nsteps, &opts)?;
                let n = t.total_tamings();
                if n > 0 {
                    part.traj.tamed += 1;
                }
                if t.monodromy_truncation().is_some() {
                    part.traj.untamed += 1;
                }
                part.traj.max_tamings = part.traj.max_tamings.max(n);
                Some(t)
            }
            None => None,
        };

        let mut exact: Option<PrefactorSeries> = None;
        let mut buf = Vec::with_capacity(full);
        for (r, route) in self.routes.iter().enumerate() {
            let source = if route.gate == Gate::Regularize {
                tamed.as_ref().unwrap()
            } else {
                &traj
            };
            let series = match route.method {
                PrefactorMethod::PoorPersons => match &self.central {
                    Some(Ok(c)) => c.clone(),
                    _ => continue,
                },
                PrefactorMethod::ExactMonodromy if route.gate != Gate::Regularize => {
                    if exact.is_none() {
                        exact = Some(prefactor::prefactor_exact(source, gamma)?);
                    }
                    exact.clone().unwrap()
                }
                m => prefactor::compute(m, source, gamma, &self.omega0)?,
            };
            let mut len = series.len().min(base.len());
            let counters = &mut part.routes[r];
            match route.gate {
                Gate::Det(tol) => {
                    if let Some(k) = first_det_rejection(source, tol) {
                        len = len.min(k);
                    }
                }
                Gate::Kay(d) => {
                    if let Some(k) = first_kay_rejection(&series.c, d) {
                        len = len.min(k);
                    }
                }
                Gate::Regularize => {
                    if source.monodromy_truncation().is_some() {
                        counters.failed += 1;
                    }
                }
                Gate::Free | Gate::Off => {}
            }
            match (route.method, series.stop) {
                (PrefactorMethod::Johnson(_), Some((_, PrefactorStop::NegativeCurvature))) => {
                    counters.failed += 1
                }
                (PrefactorMethod::Adiabatic, Some((k, PrefactorStop::Diverged)))
                    if k < traj.len() =>
                {
                    counters.failed += 1
                }
                _ => {}
            }
            if len < full {
                counters.truncated += 1;
            }
            counters.branch_warnings += series.branch_warnings;
            counters.held_steps += series.held_steps;
            buf.clear();
            match &part.acc[r] {
                Acc::Ta(_) => buf.extend(
                    (0..len).map(|k| base[k] * Complex64::from_polar(1.0, series.phase[k] / HBAR)),
                ),
                Acc::Hk(_) => buf.extend((0..len).map(|k| base[k] * series.c[k] * hk_scale)),
            }
            if let Some(k) = buf.iter().position(|z| !z.is_finite()) {
                buf.truncate(k);
            }
            match &mut part.acc[r] {
                Acc::Ta(acc) => acc.add(&buf, density, &self.grid, self.window, &self.tr),
                Acc::Hk(acc) => acc.add(&buf),
            }
        }
        if index < cfg.output.dump_trajectories {
            part.dumps.push((index, dump_table(&traj, tamed.as_ref())));
        }
        Ok(())
    }
}

fn dump_table(traj: &TrajectoryRecord, tamed: Option<&TrajectoryRecord>) -> String {
    use std::fmt::Write;
    let f = traj.dim();
    let mut s = String::from("# t");
    for j in 0..f {
        let _ = write!(s, " q{j}");
    }
    for j in 0..f {
        let _ = write!(s, " p{j}");
    }
    s.push_str(" S 1-det(MtM) flags\n");
    for k in 0..traj.len() {
        let _ = write!(s, "{:.6e}", k as f64 * traj.dt());
        for x in traj.q(k).iter().chain(traj.p(k)) {
            let _ = write!(s, " {x:.12e}");
        }
        let dev = if k < traj.monodromy_len() {
            traj.det_deviation(k)
        } else {
            f64::NAN
        };
        // bit 0: monodromy diverged; bits 8+: tamings at this step
        let mut flags = u32::from(k >= traj.monodromy_len());
        if let Some(t) = tamed {
            if k < t.len() {
                flags |= t.tamings_at(k) << 8;
            }
        }
        let _ = writeln!(s, " {:.12e} {dev:.6e} {flags}", traj.action(k));
    }
    s
}

/// Chunk boundaries depend on N only, so the reduction order (and every
/// output bit) is independent of the worker count.
fn chunk_size(n: usize) -> usize {
    n.div_ceil(256).max(16)
}

/// Reference levels in hartree: the explicit list, else the DVR levels.
pub fn reference_levels(cfg: &RunConfig) -> Result<Vec<f64>> {
    if let Some(l) = &cfg.reference_levels {
        return Ok(l.values.iter().map(|&x| cfg.unit().to_hartree(x)).collect());
    }
    if cfg.dvr.is_some() {
        let spec = cfg.pes_spec()?;
        let sol = dvr_solve_with(&spec, &cfg.dvr_grid()?, &cfg.dvr_options(false))?;
        return Ok(sol.energies);
    }
    Ok(Vec::new())
}

fn central_series(
    cfg: &RunConfig,
    spec: &PesSpec,
    chi: &CoherentState,
) -> Result<std::result::Result<PrefactorSeries, String>> {
    let z: PhasePoint = chi.components()[0].1.clone();
    let t = propagate(
        spec,
        &z,
        cfg.dynamics.dt,
        cfg.dynamics.nsteps,
        &PropagateOptions::default(),
    )?;
    if t.classical_truncation().is_some() {
        return Ok(Err("the central trajectory escapes the bound region".into()));
    }
    if let Some((k, _)) = t.monodromy_truncation() {
        return Ok(Err(format!(
            "the central trajectory's monodromy diverges at step {k}"
        )));
    }
    let s = prefactor::prefactor_exact(&t, chi.gamma())?;
    if let Some((k, _)) = s.stop {
        return Ok(Err(format!("the central prefactor diverges at step {k}")));
    }
    Ok(Ok(s))
}

/// Runs the campaign described by `cfg`. Nothing is written to disk.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let spec = cfg.pes_spec()?;
    let chi = cfg.reference_state()?;
    let grid = cfg.energy_grid()?;
    let routes = routes(cfg)?;
    let needs_central = routes
        .iter()
        .any(|r| r.method == PrefactorMethod::PoorPersons);
    let central = if needs_central {
        Some(central_series(cfg, &spec, &chi)?)
    } else {
        None
    };
    let reg = routes
        .iter()
        .any(|r| r.gate == Gate::Regularize)
        .then(|| cfg.regularization());
    let ctx = Context {
        cfg,
        omega0: spec.harmonic_frequencies(),
        spec,
        chi,
        tr: FftTransform::new(grid.len),
        grid,
        window: cfg.window(),
        routes,
        central,
        reg,
    };
    let refs = reference_levels(cfg)?;

    let n = cfg.sampling.n;
    let size = chunk_size(n);
    let nchunks = n.div_ceil(size);
    let work = || -> Result<Vec<Partial>> {
        (0..nchunks)
            .into_par_iter()
            .map(|c| {
                let mut part = ctx.empty_partial();
                for i in c * size..((c + 1) * size).min(n) {
                    ctx.process(i, &mut part)?;
                }
                Ok(part)
            })
            .collect()
    };
    let parts = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config {
                path: "--threads".into(),
                message: e.to_string(),
            })?
            .install(work)?,
        None => work()?,
    };
    let mut total = ctx.empty_partial();
    for p in parts {
        total.merge(p);
    }
    total.dumps.sort_by_key(|d| d.0);

    let unit = cfg.unit();
    let peak_cfg = &cfg.peaks;
    let mut outcomes = Vec::with_capacity(ctx.routes.len());
    let mut spectra = Vec::with_capacity(ctx.routes.len());
    let mut stats = Statistics {
        escaped: total.traj.escaped,
        ..Default::default()
    };
    let nf = n as f64;
    for (r, route) in ctx.routes.iter().enumerate() {
        let c = &total.routes[r];
        let frac = c.truncated as f64 / nf;
        match route.gate {
            Gate::Det(_) => stats.det_rejected_fraction = Some(frac),
            Gate::Kay(_) => stats.kay_rejected_fraction = Some(frac),
            Gate::Regularize => {
                stats.tamed_fraction = Some(total.traj.tamed as f64 / nf);
                stats.max_tamings = Some(total.traj.max_tamings);
                stats.untamed_fraction = Some(total.traj.untamed as f64 / nf);
            }
            _ => {}
        }
        let failed_frac = c.failed as f64 / nf;
        let pf = &cfg.prefactor;
        let reason = match route.method {
            PrefactorMethod::PoorPersons => match &ctx.central {
                Some(Err(why)) => Some(format!("poor person's prefactor unavailable: {why}")),
                _ => None,
            },
            PrefactorMethod::Johnson(_) if failed_frac > pf.johnson_max_failure => Some(format!(
                "imaginary instantaneous frequencies on {:.1}% of trajectories",
                100.0 * failed_frac
            )),
            PrefactorMethod::Adiabatic if failed_frac > pf.adiabatic_max_diverged => Some(format!(
                "adiabatic mode equations diverged on {:.1}% of trajectories",
                100.0 * failed_frac
            )),
            _ if route.gate == Gate::Regularize && failed_frac > cfg.stability.max_untamed_fraction => Some(format!(
                "regularization could not avoid the numerical divergence of the monodromy matrix on {:.1}% of trajectories",
                100.0 * failed_frac
            )),
            _ => None,
        };
        let meta = SpectrumMeta {
            method: route.label.clone(),
            seed: cfg.seed,
            ..Default::default()
        };
        let finished = if reason.is_some() {
            None
        } else {
            let res = match &total.acc[r] {
                Acc::Ta(a) => a.finish(n, &ctx.grid, meta),
                Acc::Hk(a) => a.finish(n, &ctx.grid, ctx.window, &ctx.tr, meta),
            };
            match res {
                Ok(s) => Some(Ok(s)),
                Err(scivr_core::Error::EmptyEnsemble(why)) => Some(Err(why)),
                Err(e) => return Err(e.into()),
            }
        };
        let contributing = match &total.acc[r] {
            Acc::Ta(a) => a.contributing(),
            Acc::Hk(a) => a.contributing(),
        };
        let mut out = SpectrumOutcome {
            label: route.label.clone(),
            method: route.method.key(),
            policy: route.policy.map(|p| p.key().to_string()),
            status: Status::Ok,
            reason: None,
            file: None,
            contributing,
            truncated: c.truncated,
            truncated_fraction: frac,
            failed: c.failed,
            branch_warnings: c.branch_warnings,
            held_steps: c.held_steps,
            zpe: None,
            peaks: Vec::new(),
            heights: Vec::new(),
            mae: None,
            assignments: Vec::new(),
            unpaired_references: Vec::new(),
        };
        match finished {
            None => {
                out.status = Status::Inapplicable;
                out.reason = reason;
                spectra.push(None);
            }
            Some(Err(why)) => {
                out.status = Status::Empty;
                out.reason = Some(why);
                spectra.push(None);
            }
            Some(Ok(s)) => {
                let criteria = PeakCriteria {
                    min_height_fraction: peak_cfg.min_height_fraction,
                    min_prominence_fraction: peak_cfg.min_prominence_fraction,
                    min_separation: unit.to_hartree(peak_cfg.min_separation),
                };
                let table = find_peaks_with(&s.energies, &s.intensity, &criteria);
                let pe = table.energies();
                let report = mae_grouped(
                    &pe,
                    &refs,
                    unit.to_hartree(peak_cfg.pairing_window),
                    unit.to_hartree(peak_cfg.degeneracy),
                );
                let zpe = match refs.first() {
                    Some(&ground) => table
                        .dominant_near(ground, unit.to_hartree(peak_cfg.pairing_window))
                        .map(|p| p.energy),
                    None => pe.first().copied(),
                };
                out.zpe = zpe.map(|e| unit.from_hartree(e));
                out.peaks = pe.iter().map(|&e| unit.from_hartree(e)).collect();
                out.heights = table.peaks.iter().map(|p| p.height).collect();
                out.mae = report.mae.map(|e| unit.from_hartree(e));
                out.assignments = report
                    .pairs
                    .iter()
                    .map(|&(r, p)| [unit.from_hartree(refs[r]), unit.from_hartree(pe[p])])
                    .collect();
                out.unpaired_references = report.unpaired_references;
                spectra.push(Some(s));
            }
        }
        outcomes.push(out);
    }

    let summary = RunSummary {
        label: cfg.label.clone(),
        seed: cfg.seed,
        trajectories: n,
        estimator: match cfg.estimator.kind {
            EstimatorKind::Ta => "ta".into(),
            EstimatorKind::Hk => "hk".into(),
        },
        energy_unit: unit.name().into(),
        wall_time_s: start.elapsed().as_secs_f64(),
        reference_levels: refs.iter().map(|&e| unit.from_hartree(e)).collect(),
        statistics: stats,
        spectra: outcomes,
    };
    Ok(RunReport {
        config: cfg.clone(),
        summary,
        spectra,
        dumps: total.dumps,
    })
}
