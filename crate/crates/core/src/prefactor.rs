//! Herman–Kluk pre-exponential factor and its approximations.
//!
//! Every method produces a [`PrefactorSeries`] on the trajectory time grid:
//! the complex prefactor C_t and the continuous phase φ_t defined by
//! `C_t = |C_t| exp(iφ_t/ħ)`. Square roots are taken on the continuously
//! unwrapped argument so the branch never jumps.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

use crate::dynamics::{
    propagate_riccati, RiccatiSeries, TrajectoryRecord, BLANES_MOAN_4, KICKS_PER_STEP,
};
use crate::error::invalid;
use crate::linalg::{det_complex, sym_eigen};
use crate::units::HBAR;
use crate::{Error, Result};

/// What Johnson's approximation does with a negative Hessian eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativeCurvature {
    /// Stop the series and report the trajectory as inapplicable.
    #[default]
    Fail,
    /// Drop the mode's contribution at that step.
    ClampZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefactorMethod {
    ExactMonodromy,
    ExactLogDerivative,
    Adiabatic,
    PoorPersons,
    Harmonic,
    Johnson(NegativeCurvature),
    /// n-th order harmonic log-derivative correction, n ≥ 1.
    RtN(u32),
}

impl PrefactorMethod {
    pub fn validate(&self) -> Result<()> {
        match self {
            PrefactorMethod::RtN(0) => Err(invalid("R_t^(n) needs n >= 1")),
            _ => Ok(()),
        }
    }

    /// Methods whose C_t does not have unit modulus.
    pub fn has_modulus(&self) -> bool {
        matches!(
            self,
            PrefactorMethod::ExactMonodromy
                | PrefactorMethod::ExactLogDerivative
                | PrefactorMethod::Adiabatic
                | PrefactorMethod::PoorPersons
                | PrefactorMethod::RtN(_)
        )
    }

    /// Short stable name used in file names and reports.
    pub fn key(&self) -> alloc::string::String {
        use alloc::string::ToString;
        match self {
            PrefactorMethod::ExactMonodromy => "exact".to_string(),
            PrefactorMethod::ExactLogDerivative => "exact_logderiv".to_string(),
            PrefactorMethod::Adiabatic => "adiabatic".to_string(),
            PrefactorMethod::PoorPersons => "pps".to_string(),
            PrefactorMethod::Harmonic => "harmonic".to_string(),
            PrefactorMethod::Johnson(_) => "johnson".to_string(),
            PrefactorMethod::RtN(n) => alloc::format!("rt{n}"),
        }
    }
}

/// Why a prefactor series ends before its trajectory does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefactorStop {
    /// Determinant vanished or the underlying scheme overflowed.
    Diverged,
    /// Johnson's frequencies became imaginary under the `Fail` policy.
    NegativeCurvature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefactorSeries {
    pub method: PrefactorMethod,
    /// C_t per grid point.
    pub c: Vec<Complex64>,
    /// φ_t per grid point, with `C_t = |C_t| exp(iφ_t/ħ)`.
    pub phase: Vec<f64>,
    /// Largest per-step change of the argument of C_t².
    pub max_phase_jump: f64,
    /// Steps whose argument change came close enough to π that the branch
    /// choice is ambiguous.
    pub branch_warnings: usize,
    /// Grid index where the series stopped early, if it did.
    pub stop: Option<(usize, PrefactorStop)>,
    /// Steps where a guarded value was held over from the previous step.
    pub held_steps: usize,
}

impl PrefactorSeries {
    pub fn len(&self) -> usize {
        self.c.len()
    }
    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Builds C_t = sqrt(d_t exp(x_t)) where `extra` carries x_t (already
    /// continuous) and `d` is unwrapped here.
    fn from_squared(method: PrefactorMethod, d: &[Complex64], extra: Option<&[Complex64]>) -> Self {
        // The two factors of the log-derivative form can wind quickly in
        // opposite senses while their product stays smooth, so the branch is
        // tracked on the product.
        let unwrapped = match extra {
            None => unwrap_phase(d),
            Some(x) => {
                let w: Vec<Complex64> = d
                    .iter()
                    .zip(x)
                    .map(|(z, e)| Complex64::from_polar(1.0, z.arg() + e.im))
                    .collect();
                unwrap_phase(&w)
            }
        };
        let mut c = Vec::with_capacity(d.len());
        let mut phase = Vec::with_capacity(d.len());
        for (k, z) in d.iter().enumerate() {
            let xr = extra.map_or(0.0, |x| x[k].re);
            let theta = unwrapped.phase[k];
            let log_mod = 0.5 * (z.norm().ln() + xr);
            let half = 0.5 * theta;
            c.push(Complex64::from_polar(log_mod.exp(), half));
            phase.push(HBAR * half);
        }
        PrefactorSeries {
            method,
            c,
            phase,
            max_phase_jump: unwrapped.max_jump,
            branch_warnings: unwrapped.warnings,
            stop: None,
            held_steps: 0,
        }
    }

    fn unimodular(method: PrefactorMethod, phase: Vec<f64>) -> Self {
        let c = phase
            .iter()
            .map(|&p| Complex64::from_polar(1.0, p / HBAR))
            .collect();
        let max_phase_jump = phase
            .windows(2)
            .map(|w| (2.0 * (w[1] - w[0]) / HBAR).abs())
            .fold(0.0, f64::max);
        PrefactorSeries {
            method,
            c,
            phase,
            max_phase_jump,
            branch_warnings: 0,
            stop: None,
            held_steps: 0,
        }
    }

    /// Same values under a different method tag (poor person's reuse).
    pub fn retagged(&self, method: PrefactorMethod) -> Self {
        PrefactorSeries {
            method,
            ..self.clone()
        }
    }
}

/// Continuous argument of a complex series.
#[derive(Debug, Clone, PartialEq)]
pub struct UnwrappedPhase {
    pub phase: Vec<f64>,
    /// Largest |Δ arg| between neighbouring points.
    pub max_jump: f64,
    /// Increments within 10% of π (or through an exact zero) where the
    /// branch choice is unreliable.
    pub warnings: usize,
}

const BRANCH_RISK: f64 = 0.9 * PI;

/// Unwraps the argument of `z` by accumulating principal-value increments.
/// The first value is the principal argument of `z[0]`.
pub fn unwrap_phase(z: &[Complex64]) -> UnwrappedPhase {
    let mut phase = Vec::with_capacity(z.len());
    let mut max_jump: f64 = 0.0;
    let mut warnings = 0;
    let Some(first) = z.first() else {
        return UnwrappedPhase {
            phase,
            max_jump,
            warnings,
        };
    };
    let mut acc = if first.norm() > 0.0 { first.arg() } else { 0.0 };
    phase.push(acc);
    for w in z.windows(2) {
        let ratio = w[1] * w[0].conj();
        let step = if ratio.norm() > 0.0 {
            ratio.arg()
        } else {
            warnings += 1;
            0.0
        };
        if step.abs() >= BRANCH_RISK {
            warnings += 1;
        }
        max_jump = max_jump.max(step.abs());
        acc += step;
        phase.push(acc);
    }
    UnwrappedPhase {
        phase,
        max_jump,
        warnings,
    }
}

fn check_gamma(gamma: &[f64], f: usize) -> Result<()> {
    if gamma.len() != f {
        return Err(Error::DimensionMismatch {
            expected: f,
            got: gamma.len(),
        });
    }
    if gamma.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
        return Err(invalid("coherent-state widths must be positive"));
    }
    Ok(())
}

/// `½(M_qq + γ⁻¹M_ppγ + (i/ħ)γ⁻¹M_pq − iħM_qpγ)` for a row-major 2F×2F
/// monodromy slice.
pub fn hk_matrix(m: &[f64], gamma: &[f64]) -> Vec<Complex64> {
    let f = gamma.len();
    let n = 2 * f;
    let mut a = vec![Complex64::new(0.0, 0.0); f * f];
    for i in 0..f {
        for j in 0..f {
            let pp = m[i * n + j];
            let pq = m[i * n + f + j];
            let qp = m[(f + i) * n + j];
            let qq = m[(f + i) * n + f + j];
            let re = qq + pp * gamma[j] / gamma[i];
            let im = pq / (HBAR * gamma[i]) - HBAR * qp * gamma[j];
            a[i * f + j] = Complex64::new(0.5 * re, 0.5 * im);
        }
    }
    a
}

/// `Q + (i/ħ)γ⁻¹P` divided by 2, with `Q = M_qq − iħM_qpγ` and
/// `P = M_pq − iħM_ppγ`.
pub fn hk_matrix_qp(m: &[f64], gamma: &[f64]) -> Vec<Complex64> {
    let f = gamma.len();
    let n = 2 * f;
    let i = Complex64::new(0.0, 1.0);
    let mut a = vec![Complex64::new(0.0, 0.0); f * f];
    for r in 0..f {
        for c in 0..f {
            let q = m[(f + r) * n + f + c] - i * HBAR * m[(f + r) * n + c] * gamma[c];
            let p = m[r * n + f + c] - i * HBAR * m[r * n + c] * gamma[c];
            a[r * f + c] = 0.5 * (q + i / HBAR * p / gamma[r]);
        }
    }
    a
}

const TINY_DET: f64 = 1e-300;

/// Exact prefactor from the monodromy matrices of `traj`.
pub fn prefactor_exact(traj: &TrajectoryRecord, gamma: &[f64]) -> Result<PrefactorSeries> {
    let f = traj.dim();
    check_gamma(gamma, f)?;
    let mut d = Vec::with_capacity(traj.monodromy_len());
    let mut stop = traj
        .monodromy_truncation()
        .map(|(k, _)| (k, PrefactorStop::Diverged));
    for k in 0..traj.monodromy_len() {
        let mut a = hk_matrix(traj.monodromy_slice(k), gamma);
        let det = det_complex(&mut a, f);
        if !(det.norm() >= TINY_DET) || !det.is_finite() {
            stop = Some((k, PrefactorStop::Diverged));
            break;
        }
        d.push(det);
    }
    let mut s = PrefactorSeries::from_squared(PrefactorMethod::ExactMonodromy, &d, None);
    s.stop = stop;
    Ok(s)
}

/// Log-derivative form `C_t = sqrt(det[(I + (i/ħ)γ⁻¹R)/2]) exp(½∫Tr R)`.
pub fn prefactor_logderivative(ric: &RiccatiSeries, gamma: &[f64]) -> Result<PrefactorSeries> {
    let f = ric.dim();
    check_gamma(gamma, f)?;
    let i = Complex64::new(0.0, 1.0);
    let mut d = Vec::with_capacity(ric.len());
    let mut extra = Vec::with_capacity(ric.len());
    let mut stop = ric.diverged_at().map(|k| (k, PrefactorStop::Diverged));
    let mut a = vec![Complex64::new(0.0, 0.0); f * f];
    for k in 0..ric.len() {
        let r = ric.r(k);
        for row in 0..f {
            for col in 0..f {
                let id = if row == col { 1.0 } else { 0.0 };
                a[row * f + col] = 0.5 * (id + i * r[row * f + col] / (HBAR * gamma[row]));
            }
        }
        let det = det_complex(&mut a, f);
        if !(det.norm() >= TINY_DET) || !det.is_finite() {
            stop = Some((k, PrefactorStop::Diverged));
            break;
        }
        d.push(det);
        extra.push(ric.trace_integral(k));
    }
    let mut s =
        PrefactorSeries::from_squared(PrefactorMethod::ExactLogDerivative, &d, Some(&extra));
    s.stop = stop;
    Ok(s)
}

/// Riccati integration followed by [`prefactor_logderivative`].
pub fn prefactor_exact_logderivative(
    traj: &TrajectoryRecord,
    gamma: &[f64],
) -> Result<PrefactorSeries> {
    let ric = propagate_riccati(traj, gamma)?;
    prefactor_logderivative(&ric, gamma)
}

/// Eigenvalues (ascending) of a symmetric Hessian and the projected widths
/// `γ̃_j = Σ_i U_ij² γ_i`.
fn normal_modes(k: &[f64], gamma: &[f64], w: &mut [f64], u: &mut [f64], gt: &mut [f64]) {
    let f = gamma.len();
    sym_eigen(k, f, w, u);
    for j in 0..f {
        gt[j] = (0..f).map(|i| u[i * f + j] * u[i * f + j] * gamma[i]).sum();
    }
}

/// Guard on the denominators of the R_t^(n) series.
pub const RTN_GUARD: f64 = 1e-12;

/// Scalar n-th order harmonic log-derivative for one mode with
/// `a = ħγ̃` and squared frequency `w`. Returns `None` when a denominator
/// falls below [`RTN_GUARD`] or the value overflows.
///
/// R⁽¹⁾ = −(i/2)(a + w/a) and, with X = a − w/a,
/// R⁽ⁿ⁾ = R⁽ⁿ⁻¹⁾ + sₙ (X/2) ∏_{j=0}^{n−2} (X / 4R⁽ⁿ⁻¹⁻ʲ⁾)^(2^j)
/// with s₂ = +1 and sₙ = −1 beyond. Each order is one Newton step
/// `R ← R − (R² + w)/2R` towards the static root of the Riccati equation.
pub fn rt_n_scalar(a: f64, w: f64, n: u32) -> Option<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    let x = a - w / a;
    let mut hist: Vec<Complex64> = Vec::with_capacity(n as usize);
    hist.push(-0.5 * i * (a + w / a));
    for order in 2..=n as usize {
        let mut term = Complex64::new(0.5 * x, 0.0);
        if order > 2 {
            term = -term;
        }
        for j in 0..order - 1 {
            let r = hist[order - 2 - j];
            if !(r.norm() >= RTN_GUARD) {
                return None;
            }
            let mut factor = x / (4.0 * r);
            for _ in 0..j {
                factor = factor * factor;
            }
            term *= factor;
        }
        let next = hist[order - 2] + term;
        if !next.is_finite() {
            return None;
        }
        hist.push(next);
    }
    let last = *hist.last()?;
    if last.norm() < RTN_GUARD {
        return None;
    }
    Some(last)
}

/// R_t^(n) prefactor from the grid Hessians of `traj`.
pub fn prefactor_rt_n(traj: &TrajectoryRecord, gamma: &[f64], n: u32) -> Result<PrefactorSeries> {
    let f = traj.dim();
    check_gamma(gamma, f)?;
    if n == 0 {
        return Err(invalid("R_t^(n) needs n >= 1"));
    }
    let len = traj.len();
    let dt = traj.dt();
    let i = Complex64::new(0.0, 1.0);
    let mut w = vec![0.0; f];
    let mut u = vec![0.0; f * f];
    let mut gt = vec![0.0; f];
    let mut prev: Vec<Complex64> = gamma.iter().map(|&g| -i * HBAR * g).collect();
    let mut prev_gt: Vec<f64> = gamma.to_vec();
    let mut held = 0;
    let mut d = Vec::with_capacity(len);
    let mut extra = Vec::with_capacity(len);
    let mut integral = Complex64::new(0.0, 0.0);
    let mut prev_trace = Complex64::new(0.0, 0.0);
    for k in 0..len {
        normal_modes(traj.hessian(k), gamma, &mut w, &mut u, &mut gt);
        let mut any_held = false;
        let mut r = vec![Complex64::new(0.0, 0.0); f];
        for j in 0..f {
            match rt_n_scalar(HBAR * gt[j], w[j], n) {
                Some(v) => r[j] = v,
                None => {
                    r[j] = prev[j];
                    gt[j] = prev_gt[j];
                    any_held = true;
                }
            }
        }
        if any_held {
            held += 1;
        }
        let trace: Complex64 = r.iter().sum();
        if k > 0 {
            integral += 0.5 * dt * (prev_trace + trace);
        }
        prev_trace = trace;
        let det: Complex64 = (0..f)
            .map(|j| 0.5 * (1.0 + i * r[j] / (HBAR * gt[j])))
            .product();
        d.push(det);
        extra.push(integral);
        prev.copy_from_slice(&r);
        prev_gt.copy_from_slice(&gt);
    }
    // at t = 0 the series starts from R₀ regardless of K₀
    if let (Some(d0), Some(x0)) = (d.first_mut(), extra.first_mut()) {
        *d0 = Complex64::new(1.0, 0.0);
        *x0 = Complex64::new(0.0, 0.0);
    }
    let mut s = PrefactorSeries::from_squared(PrefactorMethod::RtN(n), &d, Some(&extra));
    s.held_steps = held;
    s.stop = traj
        .classical_truncation()
        .map(|_| (len, PrefactorStop::Diverged));
    Ok(s)
}

/// `C_t = exp(−iΣω₀ⱼt/2)` on a grid of `len` points spaced `dt`.
pub fn prefactor_harmonic(omega0: &[f64], dt: f64, len: usize) -> PrefactorSeries {
    let sum: f64 = omega0.iter().sum();
    let phase = (0..len)
        .map(|k| -HBAR * sum * (k as f64 * dt) / 2.0)
        .collect();
    PrefactorSeries::unimodular(PrefactorMethod::Harmonic, phase)
}

/// Johnson's multichannel WKB phase `−(ħ/2)∫Σⱼ ω_{τ,j} dτ`.
pub fn prefactor_johnson(
    traj: &TrajectoryRecord,
    policy: NegativeCurvature,
) -> Result<PrefactorSeries> {
    let f = traj.dim();
    let dt = traj.dt();
    let mut w = vec![0.0; f];
    let mut u = vec![0.0; f * f];
    let mut phase = Vec::with_capacity(traj.len());
    let mut stop = None;
    let mut acc = 0.0;
    let mut prev = 0.0;
    for k in 0..traj.len() {
        sym_eigen(traj.hessian(k), f, &mut w, &mut u);
        if policy == NegativeCurvature::Fail && w.iter().any(|&x| x < 0.0) {
            stop = Some((k, PrefactorStop::NegativeCurvature));
            break;
        }
        let sum: f64 = w.iter().map(|&x| x.max(0.0).sqrt()).sum();
        if k > 0 {
            acc -= 0.5 * HBAR * 0.5 * dt * (prev + sum);
        }
        prev = sum;
        phase.push(acc);
    }
    let mut s = PrefactorSeries::unimodular(PrefactorMethod::Johnson(policy), phase);
    if stop.is_none() {
        stop = traj
            .classical_truncation()
            .map(|_| (traj.len(), PrefactorStop::Diverged));
    }
    s.stop = stop;
    Ok(s)
}

/// Adiabatic prefactor: the instantaneous normal modes evolve as decoupled
/// oscillators with the trajectory's own composition.
pub fn prefactor_adiabatic(traj: &TrajectoryRecord, gamma: &[f64]) -> Result<PrefactorSeries> {
    let f = traj.dim();
    check_gamma(gamma, f)?;
    let comp = BLANES_MOAN_4;
    let dt = traj.dt();
    let i = Complex64::new(0.0, 1.0);
    let mut w = vec![0.0; f];
    let mut u = vec![0.0; f * f];
    let mut gt = vec![0.0; f];
    normal_modes(traj.hessian(0), gamma, &mut w, &mut u, &mut gt);
    let widths = gt.clone();
    let mut q: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); f];
    let mut p: Vec<Complex64> = widths.iter().map(|&g| -i * HBAR * g).collect();
    let det_of = |q: &[Complex64], p: &[Complex64]| -> Complex64 {
        (0..f)
            .map(|j| 0.5 * (q[j] + i * p[j] / (HBAR * widths[j])))
            .product()
    };
    let mut d = Vec::with_capacity(traj.len());
    d.push(det_of(&q, &p));
    let mut stop = traj
        .classical_truncation()
        .map(|_| (traj.len(), PrefactorStop::Diverged));
    'steps: for step in 0..traj.len().saturating_sub(1) {
        for s in 0..KICKS_PER_STEP {
            sym_eigen(traj.stage_hessian(step, s), f, &mut w, &mut u);
            let h = comp.kick[s] * dt;
            for j in 0..f {
                p[j] -= h * w[j] * q[j];
            }
            if s < KICKS_PER_STEP - 1 {
                let a = comp.drift[s] * dt;
                for j in 0..f {
                    q[j] += a * p[j];
                }
            }
        }
        let det = det_of(&q, &p);
        if !det.is_finite() || !(det.norm() >= TINY_DET) || det.norm() > 1e300 {
            stop = Some((step + 1, PrefactorStop::Diverged));
            break 'steps;
        }
        d.push(det);
    }
    let mut s = PrefactorSeries::from_squared(PrefactorMethod::Adiabatic, &d, None);
    s.stop = stop;
    Ok(s)
}

/// Poor person's prefactor: every trajectory reuses the exact series of the
/// trajectory launched from the centre of the sampling distribution.
pub fn prefactor_pps(central: &PrefactorSeries) -> PrefactorSeries {
    central.retagged(PrefactorMethod::PoorPersons)
}

/// Computes the prefactor of `method` along `traj`. `omega0` are the harmonic
/// frequencies at the equilibrium. Poor person's needs the central series and
/// is handled by [`prefactor_pps`].
pub fn compute(
    method: PrefactorMethod,
    traj: &TrajectoryRecord,
    gamma: &[f64],
    omega0: &[f64],
) -> Result<PrefactorSeries> {
    match method {
        PrefactorMethod::ExactMonodromy => prefactor_exact(traj, gamma),
        PrefactorMethod::ExactLogDerivative => prefactor_exact_logderivative(traj, gamma),
        PrefactorMethod::Adiabatic => prefactor_adiabatic(traj, gamma),
        PrefactorMethod::Harmonic => {
            let mut s = prefactor_harmonic(omega0, traj.dt(), traj.len());
            s.stop = traj
                .classical_truncation()
                .map(|_| (traj.len(), PrefactorStop::Diverged));
            Ok(s)
        }
        PrefactorMethod::Johnson(policy) => prefactor_johnson(traj, policy),
        PrefactorMethod::RtN(n) => prefactor_rt_n(traj, gamma, n),
        PrefactorMethod::PoorPersons => Err(invalid(
            "poor person's prefactor needs the central trajectory",
        )),
    }
}
