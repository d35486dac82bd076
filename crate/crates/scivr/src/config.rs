//! Run configuration: a TOML document with one table per concern
//! (`pes`, `reference`, `sampling`, `dynamics`, `estimator`, `prefactor`,
//! `stability`, `peaks`, `reference_levels`, `dvr`, `output`).

use serde::{Deserialize, Serialize};

use scivr_core::dvr::{DvrAxis, DvrGrid, DvrOptions};
use scivr_core::pes::PesSpec;
use scivr_core::prefactor::{NegativeCurvature, PrefactorMethod};
use scivr_core::spectrum::{CoherentState, EnergyGrid, Window};
use scivr_core::stability::{Regularization, TamingMode};
use scivr_core::units::{CM1_TO_HARTREE, HBAR};
use scivr_core::{dynamics::PhasePoint, Complex64};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub label: String,
    #[serde(default)]
    pub seed: u64,
    pub pes: PesConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    pub sampling: SamplingConfig,
    pub dynamics: DynamicsConfig,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub prefactor: PrefactorConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub peaks: PeaksConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_levels: Option<LevelsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dvr: Option<DvrConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PesConfig {
    HenonHeiles {
        lambda: f64,
    },
    /// Frequencies in cm⁻¹; the Morse ranges follow from them.
    MorseQuartic {
        depth: f64,
        omega_cm1: [f64; 2],
        beta: f64,
        lambda: f64,
    },
    Harmonic {
        omega: Vec<f64>,
    },
    Morse {
        depth: f64,
        omega: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MomentumRule {
    /// p_j = √(3ħω_j)
    #[default]
    FirstHarmonicLevel,
    Rest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Centre position; the equilibrium when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    /// Centre momentum; `p_rule` applies when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    pub p_rule: MomentumRule,
    /// Widths; γ_j = ω_j/ħ from the equilibrium Hessian when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    /// Optional linear combination of coherent states. Replaces `q`/`p`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<ComponentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub dt: f64,
    pub nsteps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    Ta,
    Hk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Rectangular,
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub kind: EstimatorKind,
    /// Rectangular for TA and Hann for HK when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowKind>,
    #[serde(default = "default_pad")]
    pub pad: usize,
    pub e_min: f64,
    pub e_max: f64,
}

fn default_pad() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JohnsonPolicy {
    #[default]
    Fail,
    ClampZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrefactorConfig {
    /// Method keys: exact, exact_logderiv, adiabatic, pps, harmonic, johnson, rt<n>.
    pub methods: Vec<String>,
    pub johnson_policy: JohnsonPolicy,
    /// Johnson is reported inapplicable above this fraction of failing trajectories.
    pub johnson_max_failure: f64,
    /// Adiabatic is reported inapplicable above this fraction of diverging trajectories.
    pub adiabatic_max_diverged: f64,
}

impl Default for PrefactorConfig {
    fn default() -> Self {
        PrefactorConfig {
            methods: vec!["exact".into()],
            johnson_policy: JohnsonPolicy::Fail,
            johnson_max_failure: 0.01,
            adiabatic_max_diverged: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Off,
    Det,
    Kay,
    Regularize,
}

impl PolicyKind {
    pub fn key(&self) -> &'static str {
        match self {
            PolicyKind::Off => "off",
            PolicyKind::Det => "det",
            PolicyKind::Kay => "kay",
            PolicyKind::Regularize => "regularize",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TamingKind {
    Eigenvalue,
    Eigenvector,
    #[default]
    Both,
}

/// Trajectory-quality policies for the monodromy-based methods. Each
/// listed policy yields its own spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub policies: Vec<PolicyKind>,
    pub det_tol: f64,
    /// Kay threshold D_t; the ensemble size when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kay_threshold: Option<f64>,
    pub eps_thr: f64,
    pub max_modes: usize,
    pub taming: TamingKind,
    /// Regularization is reported as failed above this fraction of
    /// trajectories whose monodromy still diverged.
    pub max_untamed_fraction: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            policies: vec![PolicyKind::Det],
            det_tol: 1e-5,
            kay_threshold: None,
            eps_thr: 1.15e3,
            max_modes: 2,
            taming: TamingKind::Both,
            max_untamed_fraction: 0.05,
        }
    }
}

/// Peak detection and pairing; energies in `output.energy_unit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeaksConfig {
    pub min_height_fraction: f64,
    /// Drops ripples riding on the flank of a stronger line.
    pub min_prominence_fraction: f64,
    pub min_separation: f64,
    pub pairing_window: f64,
    /// Reference levels closer than this share one peak.
    pub degeneracy: f64,
}

impl Default for PeaksConfig {
    fn default() -> Self {
        PeaksConfig {
            min_height_fraction: 0.01,
            min_prominence_fraction: 0.0,
            min_separation: 0.0,
            pairing_window: 0.1,
            degeneracy: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsConfig {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DvrConfig {
    pub n_states: usize,
    pub basis_per_dim: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub axes: Vec<AxisConfig>,
    pub check_convergence: bool,
    pub tol: f64,
}

impl Default for DvrConfig {
    fn default() -> Self {
        DvrConfig {
            n_states: 20,
            basis_per_dim: 40,
            axes: Vec::new(),
            check_convergence: false,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum EnergyUnit {
    #[default]
    #[serde(rename = "hartree")]
    Hartree,
    #[serde(rename = "cm-1")]
    Wavenumber,
}

impl EnergyUnit {
    pub fn to_hartree(&self, x: f64) -> f64 {
        match self {
            EnergyUnit::Hartree => x,
            EnergyUnit::Wavenumber => x * CM1_TO_HARTREE,
        }
    }
    pub fn from_hartree(&self, x: f64) -> f64 {
        match self {
            EnergyUnit::Hartree => x,
            EnergyUnit::Wavenumber => x / CM1_TO_HARTREE,
        }
    }
    pub fn name(&self) -> &'static str {
        match self {
            EnergyUnit::Hartree => "hartree",
            EnergyUnit::Wavenumber => "cm-1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// Unit of every energy in the config and in the written files.
    pub energy_unit: EnergyUnit,
    /// Write the first k trajectories as text.
    pub dump_trajectories: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".into(),
            energy_unit: EnergyUnit::Hartree,
            dump_trajectories: 0,
        }
    }
}

fn field(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn positive(path: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(field(path, format!("must be a positive number, got {x}")))
    }
}

fn dims(path: &str, v: &[f64], f: usize) -> Result<()> {
    if v.len() != f {
        return Err(field(
            path,
            format!("expected {f} entries, got {}", v.len()),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(field(path, "entries must be finite"));
    }
    Ok(())
}

/// Parses a method key such as `exact` or `rt3`.
pub fn parse_method(key: &str, johnson: JohnsonPolicy) -> Option<PrefactorMethod> {
    Some(match key {
        "exact" => PrefactorMethod::ExactMonodromy,
        "exact_logderiv" => PrefactorMethod::ExactLogDerivative,
        "adiabatic" => PrefactorMethod::Adiabatic,
        "pps" => PrefactorMethod::PoorPersons,
        "harmonic" => PrefactorMethod::Harmonic,
        "johnson" => PrefactorMethod::Johnson(match johnson {
            JohnsonPolicy::Fail => NegativeCurvature::Fail,
            JohnsonPolicy::ClampZero => NegativeCurvature::ClampZero,
        }),
        _ => {
            let n: u32 = key.strip_prefix("rt")?.parse().ok()?;
            if n == 0 {
                return None;
            }
            PrefactorMethod::RtN(n)
        }
    })
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration always serializes")
    }

    pub fn unit(&self) -> EnergyUnit {
        self.output.energy_unit
    }

    pub fn pes_spec(&self) -> Result<PesSpec> {
        let spec = match &self.pes {
            PesConfig::HenonHeiles { lambda } => PesSpec::henon_heiles(*lambda),
            PesConfig::MorseQuartic {
                depth,
                omega_cm1,
                beta,
                lambda,
            } => {
                positive("pes.depth", *depth)?;
                positive("pes.omega_cm1[0]", omega_cm1[0])?;
                positive("pes.omega_cm1[1]", omega_cm1[1])?;
                PesSpec::morse_quartic(
                    *depth,
                    [omega_cm1[0] * CM1_TO_HARTREE, omega_cm1[1] * CM1_TO_HARTREE],
                    *beta,
                    *lambda,
                )
                .map_err(|e| field("pes", e.to_string()))?
            }
            PesConfig::Harmonic { omega } => PesSpec::harmonic(omega.clone()),
            PesConfig::Morse { depth, omega } => {
                let alpha = scivr_core::pes::morse_alpha(*depth, *omega)
                    .map_err(|e| field("pes", e.to_string()))?;
                PesSpec::Morse1D {
                    depth: *depth,
                    alpha,
                    q_eq: 0.0,
                }
            }
        };
        spec.validate().map_err(|e| field("pes", e.to_string()))?;
        Ok(spec)
    }

    /// The reference coherent state χ.
    pub fn reference_state(&self) -> Result<CoherentState> {
        let spec = self.pes_spec()?;
        let f = spec.dim();
        let omega = spec.harmonic_frequencies();
        let r = &self.reference;
        let gamma = match &r.gamma {
            Some(g) => {
                dims("reference.gamma", g, f)?;
                if g.iter().any(|x| !(*x > 0.0)) {
                    return Err(field("reference.gamma", "widths must be positive"));
                }
                g.clone()
            }
            None => {
                if omega.iter().any(|w| !(*w > 0.0)) {
                    return Err(field(
                        "reference.gamma",
                        "equilibrium has a zero frequency; give widths explicitly",
                    ));
                }
                omega.iter().map(|w| w / HBAR).collect()
            }
        };
        if !r.components.is_empty() {
            let mut comps = Vec::with_capacity(r.components.len());
            for (i, c) in r.components.iter().enumerate() {
                dims(&format!("reference.components[{i}].q"), &c.q, f)?;
                dims(&format!("reference.components[{i}].p"), &c.p, f)?;
                let z = PhasePoint::new(c.q.clone(), c.p.clone())
                    .map_err(|e| field("reference.components", e.to_string()))?;
                comps.push((Complex64::new(c.re, c.im), z));
            }
            return CoherentState::combination(gamma, comps)
                .map_err(|e| field("reference.components", e.to_string()));
        }
        let q = match &r.q {
            Some(q) => {
                dims("reference.q", q, f)?;
                q.clone()
            }
            None => spec.equilibrium(),
        };
        let p = match &r.p {
            Some(p) => {
                dims("reference.p", p, f)?;
                p.clone()
            }
            None => match r.p_rule {
                MomentumRule::FirstHarmonicLevel => {
                    omega.iter().map(|w| (3.0 * HBAR * w).sqrt()).collect()
                }
                MomentumRule::Rest => vec![0.0; f],
            },
        };
        let z = PhasePoint::new(q, p).map_err(|e| field("reference", e.to_string()))?;
        CoherentState::new(z, gamma).map_err(|e| field("reference", e.to_string()))
    }

    pub fn methods(&self) -> Result<Vec<PrefactorMethod>> {
        let mut out = Vec::new();
        for (i, key) in self.prefactor.methods.iter().enumerate() {
            let m = parse_method(key, self.prefactor.johnson_policy).ok_or_else(|| {
                field(
                    &format!("prefactor.methods[{i}]"),
                    format!("unknown method '{key}'"),
                )
            })?;
            if out.contains(&m) {
                return Err(field(
                    &format!("prefactor.methods[{i}]"),
                    format!("'{key}' listed twice"),
                ));
            }
            out.push(m);
        }
        if out.is_empty() {
            return Err(field(
                "prefactor.methods",
                "at least one method is required",
            ));
        }
        Ok(out)
    }

    pub fn window(&self) -> Window {
        match (self.estimator.window, self.estimator.kind) {
            (Some(WindowKind::Rectangular), _) | (None, EstimatorKind::Ta) => Window::Rectangular,
            (Some(WindowKind::Hann), _) | (None, EstimatorKind::Hk) => Window::Hann,
        }
    }

    pub fn energy_grid(&self) -> Result<EnergyGrid> {
        let u = self.unit();
        EnergyGrid::new(
            self.dynamics.dt,
            self.dynamics.nsteps,
            self.estimator.pad,
            u.to_hartree(self.estimator.e_min),
            u.to_hartree(self.estimator.e_max),
        )
        .map_err(|e| field("estimator", e.to_string()))
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            eps_thr: self.stability.eps_thr,
            max_modes: self.stability.max_modes,
            mode: match self.stability.taming {
                TamingKind::Eigenvalue => TamingMode::Eigenvalue,
                TamingKind::Eigenvector => TamingMode::Eigenvector,
                TamingKind::Both => TamingMode::Both,
            },
        }
    }

    pub fn kay_threshold(&self) -> f64 {
        self.stability
            .kay_threshold
            .unwrap_or(self.sampling.n as f64)
    }

    /// DVR grid from the `dvr` block, or the surface default.
    pub fn dvr_grid(&self) -> Result<DvrGrid> {
        let spec = self.pes_spec()?;
        let block = self.dvr.clone().unwrap_or_default();
        if block.axes.is_empty() {
            return DvrGrid::default_for(&spec).map_err(|e| field("dvr", e.to_string()));
        }
        if block.axes.len() != spec.dim() {
            return Err(field(
                "dvr.axes",
                format!("expected {} axes, got {}", spec.dim(), block.axes.len()),
            ));
        }
        let axes = block
            .axes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                DvrAxis::new(a.a, a.b, a.n)
                    .map_err(|e| field(&format!("dvr.axes[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        DvrGrid::new(axes).map_err(|e| field("dvr.axes", e.to_string()))
    }

    pub fn dvr_options(&self, want_vectors: bool) -> DvrOptions {
        let block = self.dvr.clone().unwrap_or_default();
        DvrOptions {
            n_states: block.n_states,
            basis_per_dim: block.basis_per_dim,
            want_vectors,
        }
    }

    /// Checks every field; errors name the offending path.
    pub fn validate(&self) -> Result<()> {
        if self.label.is_empty() || self.label.contains(['/', '\\']) {
            return Err(field("label", "must be a non-empty file-name-safe string"));
        }
        self.pes_spec()?;
        self.reference_state()?;
        if self.sampling.n == 0 {
            return Err(field("sampling.n", "must be at least 1"));
        }
        positive("dynamics.dt", self.dynamics.dt)?;
        if self.dynamics.nsteps == 0 {
            return Err(field("dynamics.nsteps", "must be at least 1"));
        }
        if self.estimator.pad == 0 {
            return Err(field("estimator.pad", "must be at least 1"));
        }
        self.energy_grid()?;
        self.methods()?;
        let pf = &self.prefactor;
        for (path, x) in [
            ("prefactor.johnson_max_failure", pf.johnson_max_failure),
            (
                "prefactor.adiabatic_max_diverged",
                pf.adiabatic_max_diverged,
            ),
            (
                "stability.max_untamed_fraction",
                self.stability.max_untamed_fraction,
            ),
        ] {
            if !(0.0..=1.0).contains(&x) {
                return Err(field(path, "must lie in [0, 1]"));
            }
        }
        let st = &self.stability;
        if st.policies.is_empty() {
            return Err(field(
                "stability.policies",
                "at least one policy is required",
            ));
        }
        for (i, p) in st.policies.iter().enumerate() {
            if st.policies[..i].contains(p) {
                return Err(field(&format!("stability.policies[{i}]"), "listed twice"));
            }
        }
        positive("stability.det_tol", st.det_tol)?;
        if let Some(d) = st.kay_threshold {
            positive("stability.kay_threshold", d)?;
        }
        self.regularization()
            .validate()
            .map_err(|e| field("stability", e.to_string()))?;
        let pk = &self.peaks;
        if !(0.0..1.0).contains(&pk.min_height_fraction) {
            return Err(field("peaks.min_height_fraction", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&pk.min_prominence_fraction) {
            return Err(field("peaks.min_prominence_fraction", "must lie in [0, 1)"));
        }
        if !(pk.min_separation >= 0.0) || !(pk.degeneracy >= 0.0) {
            return Err(field(
                "peaks",
                "min_separation and degeneracy must be non-negative",
            ));
        }
        positive("peaks.pairing_window", pk.pairing_window)?;
        if let Some(levels) = &self.reference_levels {
            if levels.values.windows(2).any(|w| !(w[1] >= w[0]))
                || levels.values.iter().any(|x| !x.is_finite())
            {
                return Err(field(
                    "reference_levels.values",
                    "must be finite and ascending",
                ));
            }
        }
        if let Some(d) = &self.dvr {
            if d.n_states == 0 {
                return Err(field("dvr.n_states", "must be at least 1"));
            }
            if d.basis_per_dim == 0 {
                return Err(field("dvr.basis_per_dim", "must be at least 1"));
            }
            positive("dvr.tol", d.tol)?;
            self.dvr_grid()?;
        }
        Ok(())
    }
}
