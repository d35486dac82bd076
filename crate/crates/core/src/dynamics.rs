//! Classical propagation with action, monodromy matrix and log-derivative.
//!
//! Trajectories are advanced by a six-stage, fourth-order symplectic
//! Runge–Kutta–Nyström composition (Blanes–Moan SRKN₆ᵇ, kick-first). The
//! monodromy matrix is advanced by the tangent map of exactly the same
//! composition, so it is the Jacobian of the discrete flow and stays
//! symplectic to rounding. The Hessian of every kick stage is stored so that
//! the prefactor routines (Riccati scheme, adiabatic modes) can replay the
//! composition on their own variables.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::invalid;
use crate::linalg::{det_real, solve_complex};
use crate::pes::PesSpec;
use crate::stability::{self, Regularization};
use crate::units::HBAR;
use crate::{Error, Result};

/// Entries larger than this (or NaN) count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e300;

/// Kick-drift composition coefficients of one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Composition {
    /// Drift fractions, one fewer than kicks.
    pub drift: [f64; 6],
    /// Kick fractions.
    pub kick: [f64; 7],
}

/// Number of force (and Hessian) stages per step, counting both ends.
pub const KICKS_PER_STEP: usize = 7;

/// Blanes–Moan SRKN₆ᵇ, fourth order.
pub const BLANES_MOAN_4: Composition = {
    let b1 = 0.0829844064174052;
    let b2 = 0.396309801498368;
    let b3 = -0.0390563049223486;
    let b4 = 1.0 - 2.0 * (b1 + b2 + b3);
    let a1 = 0.245298957184271;
    let a2 = 0.604872665711080;
    let a3 = 0.5 - (a1 + a2);
    Composition {
        drift: [a1, a2, a3, a3, a2, a1],
        kick: [b1, b2, b3, b4, b3, b2, b1],
    }
};

/// A point in phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                got: p.len(),
            });
        }
        Ok(PhasePoint { q, p })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|x| x.is_finite())
    }
}

/// The 2F×2F stability matrix ∂(p_t, q_t)/∂(p₀, q₀), row-major with the
/// momentum rows and columns first.
#[derive(Debug, Clone, PartialEq)]
pub struct MonodromyMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl MonodromyMatrix {
    pub fn identity(dim: usize) -> Self {
        let n = 2 * dim;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        MonodromyMatrix { dim, data }
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 4 * dim * dim {
            return Err(Error::DimensionMismatch {
                expected: 4 * dim * dim,
                got: data.len(),
            });
        }
        Ok(MonodromyMatrix { dim, data })
    }

    /// Degrees of freedom F.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn block(&self, row0: usize, col0: usize) -> Vec<f64> {
        let f = self.dim;
        let n = 2 * f;
        let mut out = vec![0.0; f * f];
        for i in 0..f {
            for j in 0..f {
                out[i * f + j] = self.data[(row0 + i) * n + col0 + j];
            }
        }
        out
    }

    /// ∂p_t/∂p₀
    pub fn pp(&self) -> Vec<f64> {
        self.block(0, 0)
    }
    /// ∂p_t/∂q₀
    pub fn pq(&self) -> Vec<f64> {
        self.block(0, self.dim)
    }
    /// ∂q_t/∂p₀
    pub fn qp(&self) -> Vec<f64> {
        self.block(self.dim, 0)
    }
    /// ∂q_t/∂q₀
    pub fn qq(&self) -> Vec<f64> {
        self.block(self.dim, self.dim)
    }

    /// `1 − det(MᵀM)`.
    pub fn det_deviation(&self) -> f64 {
        stability::check_det(&self.data, 2 * self.dim)
    }

    pub fn det(&self) -> f64 {
        let mut m = self.data.clone();
        det_real(&mut m, 2 * self.dim)
    }
}

/// Options for [`propagate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropagateOptions {
    /// Tame the monodromy matrix after every step.
    pub regularization: Option<Regularization>,
}

/// Why a trajectory or one of its derived series stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    /// Position or momentum overflowed (escape over a barrier).
    NonFiniteState,
    /// Monodromy entries exceeded [`DIVERGENCE_LIMIT`].
    MonodromyDiverged,
    /// The eigen-decomposition needed for taming failed.
    RegularizationFailed,
}

/// Everything recorded along one classical trajectory.
///
/// Grid quantities have `len()` entries (index k ↔ t = kΔt). Monodromy
/// quantities have `monodromy_len()` ≤ `len()` entries; after a monodromy
/// divergence the classical part keeps going.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    dim: usize,
    dt: f64,
    nsteps: usize,
    len: usize,
    q: Vec<f64>,
    p: Vec<f64>,
    action: Vec<f64>,
    energy: Vec<f64>,
    hessians: Vec<f64>,
    stage_hessians: Vec<f64>,
    monodromy: Vec<f64>,
    monodromy_len: usize,
    det_deviation: Vec<f64>,
    tamings: Vec<u32>,
    classical_stop: Option<Truncation>,
    monodromy_stop: Option<(usize, Truncation)>,
}

impl TrajectoryRecord {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    /// Steps requested.
    pub fn nsteps(&self) -> usize {
        self.nsteps
    }
    /// Number of valid grid points (at most `nsteps + 1`).
    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    pub fn q(&self, k: usize) -> &[f64] {
        &self.q[k * self.dim..(k + 1) * self.dim]
    }
    pub fn p(&self, k: usize) -> &[f64] {
        &self.p[k * self.dim..(k + 1) * self.dim]
    }
    pub fn point(&self, k: usize) -> PhasePoint {
        PhasePoint {
            q: self.q(k).to_vec(),
            p: self.p(k).to_vec(),
        }
    }
    /// Accumulated classical action S_t.
    pub fn action(&self, k: usize) -> f64 {
        self.action[k]
    }
    pub fn energy(&self, k: usize) -> f64 {
        self.energy[k]
    }
    /// Hessian K_t at grid point k.
    pub fn hessian(&self, k: usize) -> &[f64] {
        let f2 = self.dim * self.dim;
        &self.hessians[k * f2..(k + 1) * f2]
    }
    /// Hessian at kick stage `stage` of step k → k+1. Stage 0 sits on grid
    /// point k, the last stage on grid point k+1.
    pub fn stage_hessian(&self, step: usize, stage: usize) -> &[f64] {
        let f2 = self.dim * self.dim;
        let at = (step * KICKS_PER_STEP + stage) * f2;
        &self.stage_hessians[at..at + f2]
    }
    pub fn monodromy_len(&self) -> usize {
        self.monodromy_len
    }
    /// Row-major 2F×2F monodromy (or tamed monodromy) at grid point k.
    pub fn monodromy_slice(&self, k: usize) -> &[f64] {
        let n2 = 4 * self.dim * self.dim;
        &self.monodromy[k * n2..(k + 1) * n2]
    }
    pub fn monodromy(&self, k: usize) -> MonodromyMatrix {
        MonodromyMatrix {
            dim: self.dim,
            data: self.monodromy_slice(k).to_vec(),
        }
    }
    /// `1 − det(MᵀM)` at grid point k.
    pub fn det_deviation(&self, k: usize) -> f64 {
        self.det_deviation[k]
    }
    /// Number of tamed modes applied after the step that ends at k.
    pub fn tamings_at(&self, k: usize) -> u32 {
        self.tamings[k]
    }
    pub fn total_tamings(&self) -> u32 {
        self.tamings.iter().sum()
    }
    /// Steps at which at least one mode was tamed.
    pub fn tamed_steps(&self) -> usize {
        self.tamings.iter().filter(|&&c| c > 0).count()
    }
    pub fn classical_truncation(&self) -> Option<Truncation> {
        self.classical_stop
    }
    pub fn monodromy_truncation(&self) -> Option<(usize, Truncation)> {
        self.monodromy_stop
    }
}

/// Lagrangian `|p|²/2 − V` (unit mass).
pub fn lagrangian(p: &[f64], v: f64) -> f64 {
    0.5 * p.iter().map(|x| x * x).sum::<f64>() - v
}

/// Trapezoidal action increment between two grid points.
pub fn action_increment(p0: &[f64], v0: f64, p1: &[f64], v1: f64, dt: f64) -> f64 {
    0.5 * dt * (lagrangian(p0, v0) + lagrangian(p1, v1))
}

fn exceeds(values: &[f64]) -> bool {
    values.iter().any(|x| !(x.abs() <= DIVERGENCE_LIMIT))
}

/// Propagates `z0` for `nsteps` steps of `dt` together with the action and the
/// monodromy matrix.
pub fn propagate(
    spec: &PesSpec,
    z0: &PhasePoint,
    dt: f64,
    nsteps: usize,
    opts: &PropagateOptions,
) -> Result<TrajectoryRecord> {
    let f = spec.dim();
    if z0.dim() != f {
        return Err(Error::DimensionMismatch {
            expected: f,
            got: z0.dim(),
        });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid("time step must be positive"));
    }
    if !z0.is_finite() {
        return Err(invalid("initial phase point must be finite"));
    }
    let f2 = f * f;
    let n = 2 * f;
    let n2 = n * n;
    let comp = BLANES_MOAN_4;
    let points = nsteps + 1;

    let mut rec = TrajectoryRecord {
        dim: f,
        dt,
        nsteps,
        len: 0,
        q: Vec::with_capacity(points * f),
        p: Vec::with_capacity(points * f),
        action: Vec::with_capacity(points),
        energy: Vec::with_capacity(points),
        hessians: Vec::with_capacity(points * f2),
        stage_hessians: Vec::with_capacity(nsteps * KICKS_PER_STEP * f2),
        monodromy: Vec::with_capacity(points * n2),
        monodromy_len: 0,
        det_deviation: Vec::with_capacity(points),
        tamings: Vec::with_capacity(points),
        classical_stop: None,
        monodromy_stop: None,
    };

    let mut q = z0.q.clone();
    let mut p = z0.p.clone();
    let mut grad = vec![0.0; f];
    let mut hess = vec![0.0; f2];
    let mut v = spec.evaluate_into(&q, &mut grad, &mut hess);
    let mut m = MonodromyMatrix::identity(f).data;
    let mut m_alive = true;
    let mut tmp = vec![0.0; n];

    let push_point =
        |rec: &mut TrajectoryRecord, q: &[f64], p: &[f64], v: f64, hess: &[f64], s: f64| {
            rec.q.extend_from_slice(q);
            rec.p.extend_from_slice(p);
            rec.action.push(s);
            rec.energy
                .push(0.5 * p.iter().map(|x| x * x).sum::<f64>() + v);
            rec.hessians.extend_from_slice(hess);
            rec.len += 1;
        };

    push_point(&mut rec, &q, &p, v, &hess, 0.0);
    rec.monodromy.extend_from_slice(&m);
    rec.det_deviation.push(0.0);
    rec.tamings.push(0);
    rec.monodromy_len = 1;

    let mut action = 0.0;
    for _step in 0..nsteps {
        let lag0 = lagrangian(&p, v);
        let mut stage_store = [0.0f64; 64];
        let stage_len = KICKS_PER_STEP * f2;
        let mut stages: Vec<f64> = if stage_len <= stage_store.len() {
            Vec::new()
        } else {
            vec![0.0; stage_len]
        };
        let stage_buf: &mut [f64] = if stage_len <= stage_store.len() {
            &mut stage_store[..stage_len]
        } else {
            &mut stages[..]
        };
        for s in 0..KICKS_PER_STEP {
            if s > 0 {
                v = spec.evaluate_into(&q, &mut grad, &mut hess);
            }
            stage_buf[s * f2..(s + 1) * f2].copy_from_slice(&hess);
            let h = comp.kick[s] * dt;
            for i in 0..f {
                p[i] -= h * grad[i];
            }
            if m_alive {
                // momentum rows of M pick up −h K · (position rows)
                for c in 0..n {
                    for i in 0..f {
                        let mut acc = 0.0;
                        for j in 0..f {
                            acc += hess[i * f + j] * m[(f + j) * n + c];
                        }
                        tmp[i] = acc;
                    }
                    for i in 0..f {
                        m[i * n + c] -= h * tmp[i];
                    }
                }
            }
            if s < KICKS_PER_STEP - 1 {
                let d = comp.drift[s] * dt;
                for i in 0..f {
                    q[i] += d * p[i];
                }
                if m_alive {
                    for i in 0..f {
                        for c in 0..n {
                            m[(f + i) * n + c] += d * m[i * n + c];
                        }
                    }
                }
            }
        }
        if exceeds(&q) || exceeds(&p) || !v.is_finite() || exceeds(&hess) {
            rec.classical_stop = Some(Truncation::NonFiniteState);
            if m_alive {
                rec.monodromy_stop = Some((rec.monodromy_len, Truncation::NonFiniteState));
            }
            break;
        }
        action += 0.5 * dt * (lag0 + lagrangian(&p, v));
        rec.stage_hessians.extend_from_slice(stage_buf);
        push_point(&mut rec, &q, &p, v, &hess, action);

        if m_alive {
            let mut count = 0u32;
            if let Some(reg) = &opts.regularization {
                match stability::regularize(&m, f, reg) {
                    Ok((tamed, tamed_modes)) => {
                        if tamed_modes > 0 {
                            m = tamed;
                        }
                        count = tamed_modes as u32;
                    }
                    Err(_) => {
                        rec.monodromy_stop =
                            Some((rec.monodromy_len, Truncation::RegularizationFailed));
                        m_alive = false;
                    }
                }
            }
            if m_alive && exceeds(&m) {
                rec.monodromy_stop = Some((rec.monodromy_len, Truncation::MonodromyDiverged));
                m_alive = false;
            }
            if m_alive {
                rec.monodromy.extend_from_slice(&m);
                rec.det_deviation.push(stability::check_det(&m, n));
                rec.tamings.push(count);
                rec.monodromy_len += 1;
            }
        }
    }
    Ok(rec)
}

/// Log-derivative matrices R_t along a trajectory.
#[derive(Debug, Clone)]
pub struct RiccatiSeries {
    dim: usize,
    len: usize,
    r: Vec<Complex64>,
    trace_integral: Vec<Complex64>,
    diverged_at: Option<usize>,
}

impl RiccatiSeries {
    pub fn dim(&self) -> usize {
        self.dim
    }
    /// Valid grid points.
    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    /// R_t at grid point k, row-major F×F.
    pub fn r(&self, k: usize) -> &[Complex64] {
        let f2 = self.dim * self.dim;
        &self.r[k * f2..(k + 1) * f2]
    }
    /// ∫₀ᵗ Tr R_τ dτ at grid point k.
    pub fn trace_integral(&self, k: usize) -> Complex64 {
        self.trace_integral[k]
    }
    /// Grid index at which the scheme broke down, if it did.
    pub fn diverged_at(&self) -> Option<usize> {
        self.diverged_at
    }
}

/// Integrates `Ṙ = −K_t − R²` from `R₀ = −iħγ` with the kick/drift form of
/// the symplectic composition used for the trajectory:
///
/// ```text
/// X = R − bₖ Kₖ Δt
/// R = (I + aₖ X Δt)⁻¹ X
/// ```
///
/// Each drift multiplies det Q by det(I + aₖXΔt); the logarithms of these
/// factors are summed into the trace integral so that it is consistent with
/// the discrete flow rather than a quadrature of Tr R.
pub fn propagate_riccati(traj: &TrajectoryRecord, gamma: &[f64]) -> Result<RiccatiSeries> {
    let f = traj.dim();
    if gamma.len() != f {
        return Err(Error::DimensionMismatch {
            expected: f,
            got: gamma.len(),
        });
    }
    let comp = BLANES_MOAN_4;
    let f2 = f * f;
    let dt = traj.dt();
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);

    let mut r = vec![zero; f2];
    for j in 0..f {
        r[j * f + j] = Complex64::new(0.0, -HBAR * gamma[j]);
    }
    let mut out = RiccatiSeries {
        dim: f,
        len: 1,
        r: r.clone(),
        trace_integral: vec![zero],
        diverged_at: None,
    };
    let mut log_det = zero;
    let mut a = vec![zero; f2];
    let mut lu = vec![zero; f2];

    'steps: for step in 0..traj.len().saturating_sub(1) {
        for s in 0..KICKS_PER_STEP {
            let k = traj.stage_hessian(step, s);
            let h = comp.kick[s] * dt;
            for i in 0..f2 {
                r[i] -= h * k[i];
            }
            if s < KICKS_PER_STEP - 1 {
                let d = comp.drift[s] * dt;
                for i in 0..f {
                    for j in 0..f {
                        a[i * f + j] = r[i * f + j] * d + if i == j { one } else { zero };
                    }
                }
                lu.copy_from_slice(&a);
                let factor = crate::linalg::det_complex(&mut lu, f);
                lu.copy_from_slice(&a);
                if factor.norm() == 0.0 || solve_complex(&mut lu, &mut r, f, f).is_err() {
                    out.diverged_at = Some(step + 1);
                    break 'steps;
                }
                log_det += factor.ln();
            }
        }
        if r.iter().any(|z| !(z.norm() <= DIVERGENCE_LIMIT)) || !log_det.is_finite() {
            out.diverged_at = Some(step + 1);
            break;
        }
        out.r.extend_from_slice(&r);
        out.trace_integral.push(log_det);
        out.len += 1;
    }
    if out.diverged_at.is_none() {
        if let Some((at, _)) = traj.classical_truncation().map(|t| (traj.len(), t)) {
            out.diverged_at = Some(at);
        }
    }
    Ok(out)
}
