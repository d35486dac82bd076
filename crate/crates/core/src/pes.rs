//! Analytic model potential-energy surfaces.
//!
//! Every surface is expressed in unit-mass, mass-scaled coordinates and
//! returns exact first and second derivatives. Hessians are row-major
//! `F`×`F` slices.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::invalid;
use crate::linalg::sym_eigen;
use crate::{Error, Result};

/// Surface family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PesKind {
    HenonHeiles,
    MorseQuartic,
    Harmonic,
    Morse1D,
}

/// A fully parameterized model surface.
#[derive(Debug, Clone, PartialEq)]
pub enum PesSpec {
    /// `V = (x² + y²)/2 + λ(x²y − y³/3)`.
    HenonHeiles { lambda: f64 },
    /// Two Morse oscillators plus a quartic coupling:
    /// `Σ D(1 − e^{−αᵢdᵢ})² + λ[β/4 (d₁⁴ + d₂⁴) + d₁²d₂²]`, `dᵢ = qᵢ − q_eq,ᵢ`.
    MorseQuartic {
        depth: f64,
        alpha: [f64; 2],
        beta: f64,
        lambda: f64,
        q_eq: [f64; 2],
    },
    /// Separable harmonic well `Σ ωⱼ² qⱼ² / 2`.
    Harmonic { omega: Vec<f64> },
    /// Single Morse oscillator `D(1 − e^{−α(q − q_eq)})²`.
    Morse1D { depth: f64, alpha: f64, q_eq: f64 },
}

/// Value, gradient and Hessian at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PesEval {
    pub energy: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
}

/// Morse range parameter that gives a unit-mass oscillator of depth `depth`
/// the harmonic frequency `omega` (`2Dα² = ω²`).
pub fn morse_alpha(depth: f64, omega: f64) -> Result<f64> {
    if !(depth > 0.0) || !(omega > 0.0) {
        return Err(invalid("Morse depth and frequency must be positive"));
    }
    Ok(omega / (2.0 * depth).sqrt())
}

impl PesSpec {
    /// Henon–Heiles surface.
    pub fn henon_heiles(lambda: f64) -> Self {
        PesSpec::HenonHeiles { lambda }
    }

    /// Morse-plus-quartic surface with ranges fixed by the requested
    /// harmonic frequencies (a.u.) and the equilibrium at the origin.
    pub fn morse_quartic(depth: f64, omega: [f64; 2], beta: f64, lambda: f64) -> Result<Self> {
        Ok(PesSpec::MorseQuartic {
            depth,
            alpha: [morse_alpha(depth, omega[0])?, morse_alpha(depth, omega[1])?],
            beta,
            lambda,
            q_eq: [0.0, 0.0],
        })
    }

    pub fn harmonic(omega: Vec<f64>) -> Self {
        PesSpec::Harmonic { omega }
    }

    pub fn kind(&self) -> PesKind {
        match self {
            PesSpec::HenonHeiles { .. } => PesKind::HenonHeiles,
            PesSpec::MorseQuartic { .. } => PesKind::MorseQuartic,
            PesSpec::Harmonic { .. } => PesKind::Harmonic,
            PesSpec::Morse1D { .. } => PesKind::Morse1D,
        }
    }

    /// Number of degrees of freedom.
    pub fn dim(&self) -> usize {
        match self {
            PesSpec::HenonHeiles { .. } | PesSpec::MorseQuartic { .. } => 2,
            PesSpec::Harmonic { omega } => omega.len(),
            PesSpec::Morse1D { .. } => 1,
        }
    }

    /// Checks parameters for physical sense.
    pub fn validate(&self) -> Result<()> {
        let finite = |x: f64| x.is_finite();
        match self {
            PesSpec::HenonHeiles { lambda } => {
                if !finite(*lambda) {
                    return Err(invalid("henon_heiles lambda must be finite"));
                }
            }
            PesSpec::MorseQuartic {
                depth,
                alpha,
                beta,
                lambda,
                q_eq,
            } => {
                if !(*depth > 0.0) || alpha.iter().any(|a| !(*a > 0.0)) {
                    return Err(invalid("morse_quartic depth and ranges must be positive"));
                }
                if !finite(*beta) || !finite(*lambda) || q_eq.iter().any(|q| !finite(*q)) {
                    return Err(invalid("morse_quartic parameters must be finite"));
                }
            }
            PesSpec::Harmonic { omega } => {
                if omega.is_empty() || omega.iter().any(|w| !(*w > 0.0)) {
                    return Err(invalid("harmonic frequencies must be positive"));
                }
            }
            PesSpec::Morse1D { depth, alpha, q_eq } => {
                if !(*depth > 0.0) || !(*alpha > 0.0) || !finite(*q_eq) {
                    return Err(invalid("morse depth and range must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Equilibrium configuration (the global minimum).
    pub fn equilibrium(&self) -> Vec<f64> {
        match self {
            PesSpec::MorseQuartic { q_eq, .. } => q_eq.to_vec(),
            PesSpec::Morse1D { q_eq, .. } => vec![*q_eq],
            _ => vec![0.0; self.dim()],
        }
    }

    /// Harmonic frequencies at the equilibrium, ascending.
    pub fn harmonic_frequencies(&self) -> Vec<f64> {
        let n = self.dim();
        let q = self.equilibrium();
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        self.evaluate_into(&q, &mut g, &mut h);
        let mut w = vec![0.0; n];
        let mut u = vec![0.0; n * n];
        sym_eigen(&h, n, &mut w, &mut u);
        w.iter().map(|x| x.max(0.0).sqrt()).collect()
    }

    /// Potential, gradient and Hessian at `q`.
    pub fn evaluate(&self, q: &[f64]) -> Result<PesEval> {
        let n = self.dim();
        if q.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: q.len(),
            });
        }
        let mut gradient = vec![0.0; n];
        let mut hessian = vec![0.0; n * n];
        let energy = self.evaluate_into(q, &mut gradient, &mut hessian);
        Ok(PesEval {
            energy,
            gradient,
            hessian,
        })
    }

    /// Potential only.
    pub fn potential(&self, q: &[f64]) -> f64 {
        match self {
            PesSpec::HenonHeiles { lambda } => {
                let (x, y) = (q[0], q[1]);
                0.5 * (x * x + y * y) + lambda * (x * x * y - y * y * y / 3.0)
            }
            PesSpec::MorseQuartic {
                depth,
                alpha,
                beta,
                lambda,
                q_eq,
            } => {
                let d = [q[0] - q_eq[0], q[1] - q_eq[1]];
                let mut v = 0.0;
                for i in 0..2 {
                    let s = 1.0 - (-alpha[i] * d[i]).exp();
                    v += depth * s * s;
                }
                let d2 = [d[0] * d[0], d[1] * d[1]];
                v + lambda * (0.25 * beta * (d2[0] * d2[0] + d2[1] * d2[1]) + d2[0] * d2[1])
            }
            PesSpec::Harmonic { omega } => {
                omega.iter().zip(q).map(|(w, x)| 0.5 * w * w * x * x).sum()
            }
            PesSpec::Morse1D { depth, alpha, q_eq } => {
                let s = 1.0 - (-alpha * (q[0] - q_eq)).exp();
                depth * s * s
            }
        }
    }

    /// Allocation-free evaluation used on the propagation hot path. Slices
    /// must have lengths `F` and `F²`; the potential is returned.
    pub fn evaluate_into(&self, q: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        match self {
            PesSpec::HenonHeiles { lambda } => {
                let l = *lambda;
                let (x, y) = (q[0], q[1]);
                grad[0] = x + 2.0 * l * x * y;
                grad[1] = y + l * (x * x - y * y);
                hess[0] = 1.0 + 2.0 * l * y;
                hess[1] = 2.0 * l * x;
                hess[2] = hess[1];
                hess[3] = 1.0 - 2.0 * l * y;
                0.5 * (x * x + y * y) + l * (x * x * y - y * y * y / 3.0)
            }
            PesSpec::MorseQuartic {
                depth,
                alpha,
                beta,
                lambda,
                q_eq,
            } => {
                let d = [q[0] - q_eq[0], q[1] - q_eq[1]];
                let mut v = 0.0;
                for i in 0..2 {
                    let j = 1 - i;
                    let e = (-alpha[i] * d[i]).exp();
                    let s = 1.0 - e;
                    v += depth * s * s;
                    grad[i] = 2.0 * depth * alpha[i] * e * s
                        + lambda * (beta * d[i] * d[i] * d[i] + 2.0 * d[i] * d[j] * d[j]);
                    hess[i * 2 + i] = 2.0 * depth * alpha[i] * alpha[i] * e * (2.0 * e - 1.0)
                        + lambda * (3.0 * beta * d[i] * d[i] + 2.0 * d[j] * d[j]);
                }
                hess[1] = 4.0 * lambda * d[0] * d[1];
                hess[2] = hess[1];
                let d2 = [d[0] * d[0], d[1] * d[1]];
                v + lambda * (0.25 * beta * (d2[0] * d2[0] + d2[1] * d2[1]) + d2[0] * d2[1])
            }
            PesSpec::Harmonic { omega } => {
                let n = omega.len();
                for h in hess.iter_mut() {
                    *h = 0.0;
                }
                let mut v = 0.0;
                for (j, w) in omega.iter().enumerate() {
                    let w2 = w * w;
                    grad[j] = w2 * q[j];
                    hess[j * n + j] = w2;
                    v += 0.5 * w2 * q[j] * q[j];
                }
                v
            }
            PesSpec::Morse1D { depth, alpha, q_eq } => {
                let e = (-alpha * (q[0] - q_eq)).exp();
                let s = 1.0 - e;
                grad[0] = 2.0 * depth * alpha * e * s;
                hess[0] = 2.0 * depth * alpha * alpha * e * (2.0 * e - 1.0);
                depth * s * s
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::cm1_to_hartree;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn surfaces() -> Vec<PesSpec> {
        vec![
            PesSpec::henon_heiles(0.11803),
            PesSpec::henon_heiles(0.4),
            PesSpec::morse_quartic(
                0.2,
                [cm1_to_hartree(3000.0), cm1_to_hartree(1700.0)],
                0.02,
                1e-6,
            )
            .unwrap(),
            PesSpec::harmonic(vec![1.0, 0.7, 1.3]),
            PesSpec::Morse1D {
                depth: 0.2,
                alpha: 0.8,
                q_eq: 0.3,
            },
        ]
    }

    #[test]
    fn henon_heiles_examples() {
        let hh = PesSpec::henon_heiles(0.11803);
        let e = hh.evaluate(&[0.0, 0.0]).unwrap();
        assert_eq!(e.energy, 0.0);
        assert_eq!(e.gradient, vec![0.0, 0.0]);
        assert_eq!(e.hessian, vec![1.0, 0.0, 0.0, 1.0]);
        let e = PesSpec::henon_heiles(0.4).evaluate(&[1.0, 1.0]).unwrap();
        assert_relative_eq!(e.energy, 1.0 + 0.4 - 0.4 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn henon_heiles_zero_coupling_is_isotropic_oscillator() {
        let hh = PesSpec::henon_heiles(0.0);
        for &(x, y) in &[(0.3, -1.2), (2.0, 0.5), (-3.0, 4.0)] {
            assert_eq!(hh.potential(&[x, y]), 0.5 * (x * x + y * y));
        }
    }

    #[test]
    fn morse_quartic_equilibrium() {
        let w = [cm1_to_hartree(3000.0), cm1_to_hartree(1700.0)];
        let s = PesSpec::morse_quartic(0.2, w, 0.02, 1e-6).unwrap();
        let e = s.evaluate(&[0.0, 0.0]).unwrap();
        assert_eq!(e.energy, 0.0);
        assert!(e.gradient.iter().all(|g| g.abs() < 1e-18));
        assert_relative_eq!(e.hessian[0], w[0] * w[0], max_relative = 1e-12);
        assert_relative_eq!(e.hessian[3], w[1] * w[1], max_relative = 1e-12);
        assert_eq!(e.hessian[1], 0.0);
        let f = s.harmonic_frequencies();
        assert_relative_eq!(f[0], w[1], max_relative = 1e-10);
        assert_relative_eq!(f[1], w[0], max_relative = 1e-10);
    }

    #[test]
    fn morse_alpha_examples() {
        assert_relative_eq!(morse_alpha(0.5, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(morse_alpha(2.0, 2.0).unwrap(), 1.0, epsilon = 1e-15);
        // 3000 cm⁻¹ × 4.5563353e-6 = 0.0136690059 a.u.; / √0.4
        let alpha = morse_alpha(0.2, 3000.0 * 4.5563353e-6).unwrap();
        assert_relative_eq!(alpha, 0.021612596, max_relative = 1e-7);
        assert!(morse_alpha(0.0, 1.0).is_err());
        assert!(morse_alpha(1.0, -1.0).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = PesSpec::henon_heiles(0.1).evaluate(&[1.0]).unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                got: 1
            }
        );
    }

    fn scale(s: &PesSpec) -> f64 {
        match s {
            PesSpec::MorseQuartic { .. } => 20.0,
            PesSpec::Morse1D { .. } => 1.0,
            _ => 2.5,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn derivatives_match_finite_differences(u in proptest::collection::vec(-1.0f64..1.0, 3)) {
            for s in surfaces() {
                let n = s.dim();
                let q: Vec<f64> = (0..n).map(|i| u[i] * scale(&s)).collect();
                let e = s.evaluate(&q).unwrap();
                let h = 1e-5 * scale(&s);
                for i in 0..n {
                    let mut qp = q.clone();
                    let mut qm = q.clone();
                    qp[i] += h;
                    qm[i] -= h;
                    let fd = (s.potential(&qp) - s.potential(&qm)) / (2.0 * h);
                    let gscale = e.gradient.iter().fold(1e-12_f64, |a, g| a.max(g.abs()));
                    prop_assert!((fd - e.gradient[i]).abs() <= 1e-6 * gscale);
                    let gp = s.evaluate(&qp).unwrap().gradient;
                    let gm = s.evaluate(&qm).unwrap().gradient;
                    let hscale = e.hessian.iter().fold(1e-8_f64, |a, v| a.max(v.abs()));
                    for j in 0..n {
                        let fd = (gp[j] - gm[j]) / (2.0 * h);
                        prop_assert!((fd - e.hessian[j * n + i]).abs() <= 1e-5 * hscale);
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        prop_assert_eq!(e.hessian[i * n + j], e.hessian[j * n + i]);
                    }
                }
            }
        }
    }
}
