//! Small dense kernels on flat row-major slices.
//!
//! The per-step work in a trajectory touches matrices of size F or 2F with
//! F = 1..4, so these routines avoid heap traffic and work in place. Large
//! problems (the DVR Hamiltonian) go through nalgebra instead.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::{Error, Result};

/// Determinant of a real `n`×`n` matrix by LU with partial pivoting.
/// The input is overwritten.
pub fn det_real(a: &mut [f64], n: usize) -> f64 {
    debug_assert_eq!(a.len(), n * n);
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            det = -det;
        }
        let d = a[col * n + col];
        det *= d;
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f != 0.0 {
                for k in col + 1..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
            }
        }
    }
    det
}

/// Determinant of a complex `n`×`n` matrix. The input is overwritten.
pub fn det_complex(a: &mut [Complex64], n: usize) -> Complex64 {
    debug_assert_eq!(a.len(), n * n);
    match n {
        0 => return Complex64::new(1.0, 0.0),
        1 => return a[0],
        2 => return a[0] * a[3] - a[1] * a[2],
        _ => {}
    }
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].norm();
        for row in col + 1..n {
            let v = a[row * n + col].norm();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            det = -det;
        }
        let d = a[col * n + col];
        det *= d;
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            for k in col + 1..n {
                let t = a[col * n + k];
                a[row * n + k] -= f * t;
            }
        }
    }
    det
}

/// Solves `A X = B` for complex `A` (`n`×`n`) and `B` (`n`×`m`), leaving `X`
/// in `b`. `a` is overwritten.
pub fn solve_complex(a: &mut [Complex64], b: &mut [Complex64], n: usize, m: usize) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n * m);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].norm();
        for row in col + 1..n {
            let v = a[row * n + col].norm();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::SingularMatrix);
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            for k in 0..m {
                b.swap(col * m + k, piv * m + k);
            }
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            for k in col + 1..n {
                let t = a[col * n + k];
                a[row * n + k] -= f * t;
            }
            for k in 0..m {
                let t = b[col * m + k];
                b[row * m + k] -= f * t;
            }
        }
    }
    for col in (0..n).rev() {
        let d = a[col * n + col];
        for k in 0..m {
            let mut s = b[col * m + k];
            for j in col + 1..n {
                s -= a[col * n + j] * b[j * m + k];
            }
            b[col * m + k] = s / d;
        }
    }
    Ok(())
}

/// Eigen-decomposition of a small real symmetric matrix by cyclic Jacobi
/// rotations. Eigenvalues come back ascending in `values`; the matching
/// eigenvectors are the columns of `vectors` (row-major `n`×`n`).
pub fn sym_eigen(a: &[f64], n: usize, values: &mut [f64], vectors: &mut [f64]) {
    debug_assert_eq!(a.len(), n * n);
    if n == 1 {
        values[0] = a[0];
        vectors[0] = 1.0;
        return;
    }
    if n == 2 {
        sym_eigen_2x2(a, values, vectors);
        return;
    }
    let mut m: Vec<f64> = a.to_vec();
    for v in vectors.iter_mut() {
        *v = 0.0;
    }
    for i in 0..n {
        vectors[i * n + i] = 1.0;
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = vectors[k * n + p];
                    let vkq = vectors[k * n + q];
                    vectors[k * n + p] = c * vkp - s * vkq;
                    vectors[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let vecs = vectors.to_vec();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = m[src * n + src];
        for k in 0..n {
            vectors[k * n + dst] = vecs[k * n + src];
        }
    }
}

fn sym_eigen_2x2(a: &[f64], values: &mut [f64], vectors: &mut [f64]) {
    let (p, r, q) = (a[0], a[1], a[3]);
    let mean = 0.5 * (p + q);
    let half_diff = 0.5 * (p - q);
    let rad = half_diff.hypot(r);
    values[0] = mean - rad;
    values[1] = mean + rad;
    if rad == 0.0 {
        vectors.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        return;
    }
    // rotation angle that diagonalizes [[p, r], [r, q]]
    let phi = 0.5 * (2.0 * r).atan2(p - q);
    let (s, c) = phi.sin_cos();
    // (c, s) belongs to the larger eigenvalue
    vectors[0] = -s;
    vectors[2] = c;
    vectors[1] = c;
    vectors[3] = s;
}

/// `C = A B` for row-major `n`×`n` real matrices.
pub fn matmul(a: &[f64], b: &[f64], c: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[i * n + k] * b[k * n + j];
            }
            c[i * n + j] = s;
        }
    }
}

/// `AᵀA` for a row-major `n`×`n` real matrix.
pub fn gram(a: &[f64], n: usize) -> Vec<f64> {
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[k * n + i] * a[k * n + j];
            }
            g[i * n + j] = s;
            g[j * n + i] = s;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn real_det_matches_cofactor_expansion() {
        let a = [2.0, -1.0, 0.5, 1.0, 3.0, -2.0, 0.0, 4.0, 1.0];
        let expected = 2.0 * (3.0 * 1.0 - (-2.0) * 4.0)
            + (1.0 * 1.0 - (-2.0) * 0.0)
            + 0.5 * (1.0 * 4.0 - 3.0 * 0.0);
        let mut m = a;
        assert_relative_eq!(det_real(&mut m, 3), expected, epsilon = 1e-12);
    }

    #[test]
    fn complex_solve_recovers_rhs() {
        let a: Vec<Complex64> = [
            (1.0, 2.0),
            (0.5, -1.0),
            (3.0, 0.0),
            (-1.0, 1.0),
            (2.0, 2.0),
            (0.0, 1.0),
            (1.0, 0.0),
            (0.0, 0.0),
            (4.0, -3.0),
        ]
        .iter()
        .map(|&(r, i)| Complex64::new(r, i))
        .collect();
        let x = [
            Complex64::new(1.0, -1.0),
            Complex64::new(0.25, 2.0),
            Complex64::new(-3.0, 0.5),
        ];
        let mut b: Vec<Complex64> = (0..3)
            .map(|i| (0..3).map(|k| a[i * 3 + k] * x[k]).sum())
            .collect();
        let mut lu = a.clone();
        solve_complex(&mut lu, &mut b, 3, 1).unwrap();
        for k in 0..3 {
            assert!((b[k] - x[k]).norm() < 1e-12);
        }
        let mut lu = a.clone();
        let d = det_complex(&mut lu, 3);
        let d_ref = a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
            + a[2] * (a[3] * a[7] - a[4] * a[6]);
        assert!((d - d_ref).norm() < 1e-12);
    }

    #[test]
    fn jacobi_diagonalizes_symmetric_matrices() {
        for n in 1..5 {
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v =
                        ((i * 7 + j * 3) % 5) as f64 - 1.7 + if i == j { i as f64 } else { 0.0 };
                    a[i * n + j] = v;
                    a[j * n + i] = v;
                }
            }
            let mut w = vec![0.0; n];
            let mut u = vec![0.0; n * n];
            sym_eigen(&a, n, &mut w, &mut u);
            for k in 1..n {
                assert!(w[k - 1] <= w[k]);
            }
            for col in 0..n {
                for i in 0..n {
                    let av: f64 = (0..n).map(|k| a[i * n + k] * u[k * n + col]).sum();
                    assert_relative_eq!(av, w[col] * u[i * n + col], epsilon = 1e-10);
                }
            }
        }
    }
}
