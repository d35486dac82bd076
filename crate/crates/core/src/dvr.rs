//! Sinc-function discrete variable representation for 1D and 2D surfaces.
//!
//! One dimension is diagonalized directly on the grid. In two dimensions the
//! grid Hamiltonian is first contracted onto products of eigenfunctions of
//! the two one-dimensional cuts through the equilibrium, which keeps the
//! dense problem at a few thousand functions while the primitive grid stays
//! fine.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::invalid;
use crate::pes::PesSpec;
use crate::spectrum::CoherentState;
use crate::units::HBAR;
use crate::{Error, Result};

/// Uniform grid on [a, b] with `n` points including both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvrAxis {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl DvrAxis {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        let axis = DvrAxis { a, b, n };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > self.a) || !self.a.is_finite() || !self.b.is_finite() {
            return Err(invalid("DVR axis needs a < b"));
        }
        if self.n < 16 {
            return Err(invalid("DVR axis needs at least 16 points"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.b - self.a) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.a + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Same range with half the spacing.
    pub fn refined(&self) -> Self {
        DvrAxis {
            n: 2 * self.n - 1,
            ..*self
        }
    }
}

/// Colbert–Miller kinetic matrix for unit mass on a uniform grid.
pub fn kinetic_matrix(axis: &DvrAxis) -> Vec<f64> {
    let n = axis.n;
    let dx = axis.spacing();
    let pre = HBAR * HBAR / (2.0 * dx * dx);
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let v = if i == j {
                PI * PI / 3.0
            } else {
                let d = i as f64 - j as f64;
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                sign * 2.0 / (d * d)
            };
            t[i * n + j] = pre * v;
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct DvrGrid {
    pub axes: Vec<DvrAxis>,
}

impl DvrGrid {
    pub fn new(axes: Vec<DvrAxis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(invalid("DVR supports one or two dimensions"));
        }
        for a in &axes {
            a.validate()?;
        }
        Ok(DvrGrid { axes })
    }

    /// Box and point count that resolve the low-lying levels of the bundled
    /// surfaces.
    pub fn default_for(spec: &PesSpec) -> Result<Self> {
        let axes = match spec {
            PesSpec::HenonHeiles { lambda } => {
                let half = if *lambda > 0.3 { 3.5 } else { 6.0 };
                vec![DvrAxis::new(-half, half, 128)?; 2]
            }
            PesSpec::Harmonic { omega } => omega
                .iter()
                .map(|w| {
                    let half = 10.0 / w.sqrt();
                    DvrAxis::new(-half, half, 64)
                })
                .collect::<Result<Vec<_>>>()?,
            PesSpec::Morse1D { alpha, q_eq, .. } => {
                vec![DvrAxis::new(q_eq - 1.5 / alpha, q_eq + 12.0 / alpha, 256)?]
            }
            PesSpec::MorseQuartic {
                alpha, q_eq, depth, ..
            } => {
                // classical turning points at a few ZPE multiples
                let axes: Result<Vec<_>> = (0..2)
                    .map(|j| {
                        let omega = alpha[j] * (2.0 * depth).sqrt();
                        let width = 8.0 / omega.sqrt();
                        DvrAxis::new(q_eq[j] - width, q_eq[j] + 1.5 * width, 64)
                    })
                    .collect();
                axes?
            }
        };
        DvrGrid::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    /// Volume element of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).product()
    }

    pub fn refined(&self) -> Self {
        DvrGrid {
            axes: self.axes.iter().map(|a| a.refined()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DvrOptions {
    pub n_states: usize,
    /// Cut eigenfunctions kept per dimension in 2D.
    pub basis_per_dim: usize,
    pub want_vectors: bool,
}

impl Default for DvrOptions {
    fn default() -> Self {
        DvrOptions {
            n_states: 20,
            basis_per_dim: 40,
            want_vectors: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DvrSolution {
    pub grid: DvrGrid,
    /// Lowest eigenvalues, ascending.
    pub energies: Vec<f64>,
    /// ‖Hψ − Eψ‖ per returned state in the working basis.
    pub residuals: Vec<f64>,
    /// Eigenfunctions sampled on the grid (row-major, first axis slowest),
    /// normalized so that Σ|ψ|² ΔV = 1.
    pub vectors: Option<Vec<Vec<f64>>>,
}

fn dense_eigen(h: Vec<f64>, n: usize) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(DMatrix::from_row_slice(n, n, &h))
}

/// Indices of eigenvalues in ascending order.
fn ascending(values: &nalgebra::DVector<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

fn residual(h: &[f64], n: usize, v: &[f64], e: f64) -> f64 {
    let mut r2 = 0.0;
    for i in 0..n {
        let hv: f64 = (0..n).map(|k| h[i * n + k] * v[k]).sum();
        r2 += (hv - e * v[i]).powi(2);
    }
    r2.sqrt()
}

/// Eigen-pairs of `T + V(cut)` on one axis, ascending.
fn solve_1d(axis: &DvrAxis, potential: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let n = axis.n;
    let mut h = kinetic_matrix(axis);
    for i in 0..n {
        h[i * n + i] += potential(axis.point(i));
    }
    let eig = dense_eigen(h.clone(), n);
    let order = ascending(&eig.eigenvalues);
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    (values, vectors, h)
}

/// Lowest `opts.n_states` eigenvalues of the surface on `grid`.
pub fn dvr_solve_with(spec: &PesSpec, grid: &DvrGrid, opts: &DvrOptions) -> Result<DvrSolution> {
    spec.validate()?;
    if grid.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: grid.dim(),
        });
    }
    if opts.n_states == 0 {
        return Err(invalid("n_states must be at least 1"));
    }
    match grid.dim() {
        1 => solve_one(spec, grid, opts),
        _ => solve_two(spec, grid, opts),
    }
}

/// [`dvr_solve_with`] with default contraction and `n_states` levels.
pub fn dvr_solve(spec: &PesSpec, grid: &DvrGrid, n_states: usize) -> Result<DvrSolution> {
    dvr_solve_with(
        spec,
        grid,
        &DvrOptions {
            n_states,
            ..Default::default()
        },
    )
}

fn solve_one(spec: &PesSpec, grid: &DvrGrid, opts: &DvrOptions) -> Result<DvrSolution> {
    let axis = grid.axes[0];
    if opts.n_states > axis.n {
        return Err(invalid("more states requested than grid points"));
    }
    let (values, vectors, h) = solve_1d(&axis, |x| spec.potential(&[x]));
    let k = opts.n_states;
    let residuals = (0..k)
        .map(|s| residual(&h, axis.n, &vectors[s], values[s]))
        .collect();
    let scale = 1.0 / axis.spacing().sqrt();
    let vecs = opts.want_vectors.then(|| {
        vectors[..k]
            .iter()
            .map(|v| v.iter().map(|c| c * scale).collect())
            .collect()
    });
    Ok(DvrSolution {
        grid: grid.clone(),
        energies: values[..k].to_vec(),
        residuals,
        vectors: vecs,
    })
}

fn solve_two(spec: &PesSpec, grid: &DvrGrid, opts: &DvrOptions) -> Result<DvrSolution> {
    let (ax, ay) = (grid.axes[0], grid.axes[1]);
    let eq = spec.equilibrium();
    let (x0, y0) = (eq[0], eq[1]);
    let v00 = spec.potential(&[x0, y0]);
    let (ex, phix, _) = solve_1d(&ax, |x| spec.potential(&[x, y0]));
    let (ey, phiy, _) = solve_1d(&ay, |y| spec.potential(&[x0, y]) - v00);
    let kx = opts.basis_per_dim.min(ax.n);
    let ky = opts.basis_per_dim.min(ay.n);
    let nb = kx * ky;
    if opts.n_states > nb {
        return Err(invalid(
            "more states requested than contracted basis functions",
        ));
    }
    let (nx, ny) = (ax.n, ay.n);
    let xs = ax.points();
    let ys = ay.points();
    // coupling on the grid
    let mut dv = vec![0.0; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            dv[i * ny + j] = spec.potential(&[xs[i], ys[j]])
                - spec.potential(&[xs[i], y0])
                - spec.potential(&[x0, ys[j]])
                + v00;
        }
    }
    // w[i][b][d] = Σ_j φ_b(y_j) φ_d(y_j) ΔV(x_i, y_j)
    let mut w = vec![0.0; nx * ky * ky];
    let mut tmp = vec![0.0; ny];
    for i in 0..nx {
        for b in 0..ky {
            for j in 0..ny {
                tmp[j] = phiy[b][j] * dv[i * ny + j];
            }
            for d in b..ky {
                let s: f64 = (0..ny).map(|j| tmp[j] * phiy[d][j]).sum();
                w[(i * ky + b) * ky + d] = s;
                w[(i * ky + d) * ky + b] = s;
            }
        }
    }
    let mut h = vec![0.0; nb * nb];
    let mut pxx = vec![0.0; nx];
    for a in 0..kx {
        for c in a..kx {
            for i in 0..nx {
                pxx[i] = phix[a][i] * phix[c][i];
            }
            for b in 0..ky {
                for d in 0..ky {
                    let mut s = 0.0;
                    for i in 0..nx {
                        s += pxx[i] * w[(i * ky + b) * ky + d];
                    }
                    let row = a * ky + b;
                    let col = c * ky + d;
                    h[row * nb + col] = s;
                    h[col * nb + row] = s;
                }
            }
        }
    }
    for a in 0..kx {
        for b in 0..ky {
            let r = a * ky + b;
            h[r * nb + r] += ex[a] + ey[b];
        }
    }
    let eig = dense_eigen(h.clone(), nb);
    let order = ascending(&eig.eigenvalues);
    let k = opts.n_states;
    let energies: Vec<f64> = order[..k].iter().map(|&s| eig.eigenvalues[s]).collect();
    let coeffs: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&s| eig.eigenvectors.column(s).iter().copied().collect())
        .collect();
    let residuals = coeffs
        .iter()
        .zip(&energies)
        .map(|(c, &e)| residual(&h, nb, c, e))
        .collect();
    let vectors = opts.want_vectors.then(|| {
        let scale = 1.0 / grid.cell_volume().sqrt();
        coeffs
            .iter()
            .map(|c| {
                let mut psi = vec![0.0; nx * ny];
                for a in 0..kx {
                    for b in 0..ky {
                        let coef = c[a * ky + b] * scale;
                        if coef == 0.0 {
                            continue;
                        }
                        for i in 0..nx {
                            let ca = coef * phix[a][i];
                            for j in 0..ny {
                                psi[i * ny + j] += ca * phiy[b][j];
                            }
                        }
                    }
                }
                psi
            })
            .collect()
    });
    Ok(DvrSolution {
        grid: grid.clone(),
        energies,
        residuals,
        vectors,
    })
}

/// Solves on `grid` and on the grid with halved spacing; fails when any of
/// the lowest `opts.n_states` levels moves by more than `tol`. Returns the
/// finer solution.
pub fn dvr_converged(
    spec: &PesSpec,
    grid: &DvrGrid,
    opts: &DvrOptions,
    tol: f64,
) -> Result<DvrSolution> {
    let coarse = dvr_solve_with(
        spec,
        grid,
        &DvrOptions {
            want_vectors: false,
            ..opts.clone()
        },
    )?;
    let fine = dvr_solve_with(spec, &grid.refined(), opts)?;
    let worst = coarse
        .energies
        .iter()
        .zip(&fine.energies)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if !(worst <= tol) {
        return Err(Error::DvrNotConverged {
            coarse: coarse.energies,
            fine: fine.energies,
        });
    }
    Ok(fine)
}

/// |Σ ψ(x) χ(x) ΔV|² for a grid eigenfunction and a reference state.
pub fn overlap_with_reference(psi: &[f64], chi: &CoherentState, grid: &DvrGrid) -> Result<f64> {
    if psi.len() != grid.size() {
        return Err(Error::DimensionMismatch {
            expected: grid.size(),
            got: psi.len(),
        });
    }
    if chi.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: chi.dim(),
        });
    }
    let dv = grid.cell_volume();
    let mut acc = num_complex::Complex64::new(0.0, 0.0);
    let mut x = vec![0.0; grid.dim()];
    for (idx, &v) in psi.iter().enumerate() {
        let mut rest = idx;
        for d in (0..grid.dim()).rev() {
            let n = grid.axes[d].n;
            x[d] = grid.axes[d].point(rest % n);
            rest /= n;
        }
        acc += chi.wavefunction(&x) * v;
    }
    Ok((acc * dv).norm_sqr())
}
