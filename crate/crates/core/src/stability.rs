//! Trajectory quality checks and monodromy taming.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::dynamics::TrajectoryRecord;
use crate::error::invalid;
use crate::linalg::{det_real, gram};
use crate::{Error, Result};

/// Which part of an unstable eigen-pair is removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TamingMode {
    /// Zero the eigenvalue: `M − λ u vᵀ / (vᵀu)`.
    Eigenvalue,
    /// Zero the right eigenvector: `M (I − u vᵀ / (vᵀu))`.
    Eigenvector,
    /// Both: `(I − P) M (I − P)` with `P = u vᵀ / (vᵀu)`.
    #[default]
    Both,
}

/// Parameters of monodromy taming.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    /// Eigenvalue magnitude at which a real mode is tamed.
    pub eps_thr: f64,
    /// Most modes tamed in one call, largest first.
    pub max_modes: usize,
    pub mode: TamingMode,
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization {
            eps_thr: 1.15e3,
            max_modes: 2,
            mode: TamingMode::Both,
        }
    }
}

impl Regularization {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_thr > 0.0) {
            return Err(invalid("eps_thr must be positive"));
        }
        if self.max_modes == 0 {
            return Err(invalid("max_modes must be at least 1"));
        }
        Ok(())
    }
}

/// How unstable trajectories are handled during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StabilityPolicy {
    /// Keep everything.
    Off,
    /// Stop a trajectory once `1 − det(MᵀM)` exceeds `tol`.
    RejectDet { tol: f64 },
    /// Stop a trajectory once `|C_t|² ≥ d_t`.
    RejectKay { d_t: f64 },
    /// Tame the monodromy matrix instead of discarding.
    Regularize(Regularization),
}

impl StabilityPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StabilityPolicy::Off => Ok(()),
            StabilityPolicy::RejectDet { tol } if tol > 0.0 => Ok(()),
            StabilityPolicy::RejectDet { .. } => Err(invalid("det tolerance must be positive")),
            StabilityPolicy::RejectKay { d_t } if d_t > 0.0 => Ok(()),
            StabilityPolicy::RejectKay { .. } => Err(invalid("Kay threshold must be positive")),
            StabilityPolicy::Regularize(r) => r.validate(),
        }
    }
}

/// `1 − det(MᵀM)` for a row-major `n`×`n` matrix.
pub fn check_det(m: &[f64], n: usize) -> f64 {
    let mut g = gram(m, n);
    1.0 - det_real(&mut g, n)
}

/// True when the prefactor is too large to keep the trajectory.
pub fn check_kay(c: Complex64, d_t: f64) -> bool {
    !(c.norm_sqr() < d_t)
}

/// First grid index at which the det criterion fails, counting a monodromy
/// breakdown as failure. `None` means the trajectory is kept throughout its
/// recorded length.
pub fn first_det_rejection(rec: &TrajectoryRecord, tol: f64) -> Option<usize> {
    (0..rec.monodromy_len())
        .find(|&k| !(rec.det_deviation(k) <= tol))
        .or_else(|| rec.monodromy_truncation().map(|(k, _)| k))
}

/// First grid index with `|C_t|² ≥ d_t`.
pub fn first_kay_rejection(c: &[Complex64], d_t: f64) -> Option<usize> {
    c.iter().position(|&z| check_kay(z, d_t))
}

fn is_real(z: Complex64) -> bool {
    z.im.abs() < 1e-8 * (1.0 + z.norm())
}

fn null_vector(a: DMatrix<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    let svd = a
        .try_svd(false, true, 1e-15, 10_000)
        .ok_or_else(|| Error::Eigen("svd did not converge".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Eigen("svd returned no vectors".into()))?;
    let (imin, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc },
            );
    Ok((0..n).map(|j| vt[(imin, j)]).collect())
}

/// Tames real eigenvalues of `m` (row-major 2F×2F, `dof` = F) whose magnitude
/// reaches `reg.eps_thr`. Returns the tamed matrix and the number of modes
/// removed. With nothing to tame the input comes back unchanged.
pub fn regularize(m: &[f64], dof: usize, reg: &Regularization) -> Result<(Vec<f64>, usize)> {
    let n = 2 * dof;
    if m.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: m.len(),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen("non-finite monodromy matrix".into()));
    }
    // spectral radius is bounded by the max row sum
    let row_norm = (0..n)
        .map(|i| m[i * n..(i + 1) * n].iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if row_norm < reg.eps_thr {
        return Ok((m.to_vec(), 0));
    }
    let mut cur = m.to_vec();
    let mut tamed = 0;
    while tamed < reg.max_modes {
        let mat = DMatrix::from_row_slice(n, n, &cur);
        let schur = Schur::try_new(mat.clone(), 1e-15, 10_000)
            .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
        let eig = schur.complex_eigenvalues();
        let lambda = eig
            .iter()
            .filter(|z| is_real(**z) && z.re.abs() >= reg.eps_thr)
            .map(|z| z.re)
            .fold(None, |best: Option<f64>, x| match best {
                Some(b) if b.abs() >= x.abs() => Some(b),
                _ => Some(x),
            });
        let Some(lambda) = lambda else { break };
        let shifted = &mat - DMatrix::identity(n, n) * lambda;
        let u = null_vector(shifted.clone())?;
        let v = null_vector(shifted.transpose())?;
        let vu: f64 = v.iter().zip(&u).map(|(a, b)| a * b).sum();
        if !(vu.abs() > 1e-10) {
            return Err(Error::Eigen(format!("defective eigenvalue {lambda}")));
        }
        // P = u vᵀ / (vᵀu)
        let mut proj = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                proj[i * n + j] = u[i] * v[j] / vu;
            }
        }
        let next = match reg.mode {
            TamingMode::Eigenvalue => {
                let mut out = cur.clone();
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] -= lambda * proj[i * n + j];
                    }
                }
                out
            }
            TamingMode::Eigenvector => right_project(&cur, &proj, n),
            TamingMode::Both => {
                let mp = right_project(&cur, &proj, n);
                let mut out = mp.clone();
                for i in 0..n {
                    for j in 0..n {
                        let s: f64 = (0..n).map(|k| proj[i * n + k] * mp[k * n + j]).sum();
                        out[i * n + j] -= s;
                    }
                }
                out
            }
        };
        cur = next;
        tamed += 1;
    }
    if tamed == 0 {
        return Ok((m.to_vec(), 0));
    }
    Ok((cur, tamed))
}

/// `M (I − P)`
fn right_project(m: &[f64], proj: &[f64], n: usize) -> Vec<f64> {
    let mut out = m.to_vec();
    for i in 0..n {
        for j in 0..n {
            let s: f64 = (0..n).map(|k| m[i * n + k] * proj[k * n + j]).sum();
            out[i * n + j] -= s;
        }
    }
    out
}

/// Largest |Re λ| over the real eigenvalues of a row-major `n`×`n` matrix.
pub fn max_real_eigenvalue(m: &[f64], n: usize) -> Result<f64> {
    let mat = DMatrix::from_row_slice(n, n, m);
    let schur = Schur::try_new(mat, 1e-15, 10_000)
        .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .filter(|z| is_real(**z))
        .map(|z| z.re.abs())
        .fold(0.0, f64::max))
}
