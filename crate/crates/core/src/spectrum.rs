//! Reference states, phase-space sampling and power-spectrum estimators.
//!
//! Two estimators are provided. The Herman–Kluk route averages the survival
//! amplitude ⟨χ|e^{−iHt/ħ}|χ⟩ over the ensemble and Fourier transforms it;
//! the time-averaged route Fourier transforms each trajectory separately and
//! averages the squared moduli. Both sample initial conditions from the
//! Husimi density of the reference state and divide the integrand by that
//! density.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;
use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::PhasePoint;
use crate::error::invalid;
use crate::units::HBAR;
use crate::{Error, Result};

/// ⟨p₁q₁|p₂q₂⟩ for coherent states of common diagonal width γ.
pub fn coherent_overlap(z1: &PhasePoint, z2: &PhasePoint, gamma: &[f64]) -> Complex64 {
    overlap_raw(&z1.q, &z1.p, &z2.q, &z2.p, gamma)
}

fn overlap_raw(q1: &[f64], p1: &[f64], q2: &[f64], p2: &[f64], gamma: &[f64]) -> Complex64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for j in 0..gamma.len() {
        let dq = q1[j] - q2[j];
        let dp = p1[j] - p2[j];
        re -= gamma[j] * dq * dq / 4.0 + dp * dp / (4.0 * gamma[j] * HBAR * HBAR);
        im += (p1[j] + p2[j]) * dq / (2.0 * HBAR);
    }
    let mag = re.exp();
    // far from the centre the phase may overflow while the magnitude is zero
    if mag == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::from_polar(mag, im)
}

/// A normalized reference state: one coherent state or a linear combination
/// of coherent states sharing the width γ.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentState {
    gamma: Vec<f64>,
    components: Vec<(Complex64, PhasePoint)>,
    /// Mixture weights |c_k|² / Σ|c|² used for sampling.
    mixture: Vec<f64>,
}

impl CoherentState {
    pub fn new(center: PhasePoint, gamma: Vec<f64>) -> Result<Self> {
        Self::combination(gamma, vec![(Complex64::new(1.0, 0.0), center)])
    }

    /// Σ_k c_k |p_k q_k⟩, rescaled so that ⟨χ|χ⟩ = 1.
    pub fn combination(gamma: Vec<f64>, components: Vec<(Complex64, PhasePoint)>) -> Result<Self> {
        let f = gamma.len();
        if f == 0 || gamma.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(invalid("coherent-state widths must be positive"));
        }
        if components.is_empty() {
            return Err(invalid("reference state needs at least one component"));
        }
        for (_, z) in &components {
            if z.dim() != f {
                return Err(Error::DimensionMismatch {
                    expected: f,
                    got: z.dim(),
                });
            }
            if !z.is_finite() {
                return Err(invalid("reference centre must be finite"));
            }
        }
        let mut norm = Complex64::new(0.0, 0.0);
        for (ck, zk) in &components {
            for (cl, zl) in &components {
                norm += ck.conj() * cl * coherent_overlap(zk, zl, &gamma);
            }
        }
        if !(norm.re > 1e-300) {
            return Err(invalid("reference combination has zero norm"));
        }
        let scale = 1.0 / norm.re.sqrt();
        let components: Vec<_> = components
            .into_iter()
            .map(|(c, z)| (c * scale, z))
            .collect();
        let total: f64 = components.iter().map(|(c, _)| c.norm_sqr()).sum();
        let mixture = components
            .iter()
            .map(|(c, _)| c.norm_sqr() / total)
            .collect();
        Ok(CoherentState {
            gamma,
            components,
            mixture,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }
    pub fn components(&self) -> &[(Complex64, PhasePoint)] {
        &self.components
    }
    /// Centre of the first component.
    pub fn center(&self) -> &PhasePoint {
        &self.components[0].1
    }

    /// ⟨χ|p q⟩
    pub fn overlap(&self, q: &[f64], p: &[f64]) -> Complex64 {
        self.components
            .iter()
            .map(|(c, z)| c.conj() * overlap_raw(&z.q, &z.p, q, p, &self.gamma))
            .sum()
    }

    /// Position representation ⟨x|χ⟩.
    pub fn wavefunction(&self, x: &[f64]) -> Complex64 {
        self.components
            .iter()
            .map(|(c, z)| {
                let mut log = Complex64::new(0.0, 0.0);
                for j in 0..self.gamma.len() {
                    let g = self.gamma[j];
                    let d = x[j] - z.q[j];
                    log +=
                        Complex64::new(0.25 * (g / PI).ln() - 0.5 * g * d * d, z.p[j] * d / HBAR);
                }
                c * log.exp()
            })
            .sum()
    }

    /// Normalized density (with respect to dp dq/(2πħ)^F) the sampler draws
    /// from. For a single coherent state it is |⟨χ|p q⟩|².
    pub fn sampling_density(&self, z: &PhasePoint) -> f64 {
        self.components
            .iter()
            .zip(&self.mixture)
            .map(|((_, c), w)| w * overlap_raw(&c.q, &c.p, &z.q, &z.p, &self.gamma).norm_sqr())
            .sum()
    }

    /// Draws sample `index` of the stream identified by `seed`. Each index
    /// has its own ChaCha stream, so samples do not depend on how the
    /// ensemble is split between workers.
    pub fn sample(&self, seed: u64, index: u64) -> PhasePoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let k = if self.components.len() == 1 {
            0
        } else {
            let u: f64 = rand_distr::StandardUniform.sample(&mut rng);
            let mut acc = 0.0;
            let mut pick = self.components.len() - 1;
            for (i, w) in self.mixture.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        };
        let center = &self.components[k].1;
        let f = self.dim();
        let mut q = Vec::with_capacity(f);
        let mut p = Vec::with_capacity(f);
        for j in 0..f {
            let zq: f64 = StandardNormal.sample(&mut rng);
            let zp: f64 = StandardNormal.sample(&mut rng);
            q.push(center.q[j] + zq / self.gamma[j].sqrt());
            p.push(center.p[j] + zp * HBAR * self.gamma[j].sqrt());
        }
        PhasePoint { q, p }
    }
}

/// `n` initial conditions from the Husimi density of `chi`: position
/// variance 1/γ_j and momentum variance ħ²γ_j around each centre.
pub fn sample_husimi(chi: &CoherentState, n: usize, seed: u64) -> Vec<PhasePoint> {
    (0..n as u64).map(|i| chi.sample(seed, i)).collect()
}

/// Apodization applied to time signals before transforming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Rectangular,
    /// `½(1 + cos(πt/T))`
    Hann,
}

impl Window {
    pub fn weight(&self, t: f64, t_max: f64) -> f64 {
        match self {
            Window::Rectangular => 1.0,
            Window::Hann => 0.5 * (1.0 + (PI * t / t_max).cos()),
        }
    }
}

/// Discrete transform `G_m = Σ_k x_k exp(+2πi mk/L)` evaluated on a range of
/// bins. Inputs shorter than L are zero padded.
#[allow(clippy::len_without_is_empty)]
pub trait Transform: Sync {
    /// Transform length L.
    fn len(&self) -> usize;
    fn transform(&self, input: &[Complex64], bins: Range<usize>, out: &mut [Complex64]);
}

/// Direct summation. Cost is O(n · bins) so it suits short signals and
/// tests; the std crate provides an FFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectDft {
    pub len: usize,
}

impl Transform for DirectDft {
    fn len(&self) -> usize {
        self.len
    }

    fn transform(&self, input: &[Complex64], bins: Range<usize>, out: &mut [Complex64]) {
        let l = self.len as f64;
        for (slot, m) in out.iter_mut().zip(bins) {
            let step = Complex64::from_polar(1.0, 2.0 * PI * m as f64 / l);
            let mut tw = Complex64::new(1.0, 0.0);
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, x) in input.iter().enumerate() {
                // refresh the twiddle now and then to stop rounding drift
                if k % 256 == 0 {
                    tw = Complex64::from_polar(1.0, 2.0 * PI * ((m * k) % self.len) as f64 / l);
                }
                acc += x * tw;
                tw *= step;
            }
            *slot = acc;
        }
    }
}

/// Uniform energy axis induced by a zero-padded transform of a signal with
/// `nsteps + 1` samples spaced `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrid {
    pub dt: f64,
    pub nsteps: usize,
    /// Transform length L (a power of two).
    pub len: usize,
    pub bins: Range<usize>,
}

impl EnergyGrid {
    /// L is the smallest power of two ≥ `pad`·(nsteps+1); only bins with
    /// energies in [e_min, e_max] are kept.
    pub fn new(dt: f64, nsteps: usize, pad: usize, e_min: f64, e_max: f64) -> Result<Self> {
        if !(dt > 0.0) || nsteps == 0 {
            return Err(invalid("energy grid needs dt > 0 and at least one step"));
        }
        if pad == 0 || !(e_max > e_min) || e_min < 0.0 {
            return Err(invalid(
                "energy window must satisfy 0 <= e_min < e_max and pad >= 1",
            ));
        }
        let len = (pad * (nsteps + 1)).next_power_of_two();
        let de = 2.0 * PI * HBAR / (len as f64 * dt);
        let first = (e_min / de).ceil() as usize;
        let last = ((e_max / de).floor() as usize).min(len / 2 - 1);
        if first > last {
            return Err(invalid("energy window contains no grid points"));
        }
        Ok(EnergyGrid {
            dt,
            nsteps,
            len,
            bins: first..last + 1,
        })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI * HBAR / (self.len as f64 * self.dt)
    }

    pub fn t_max(&self) -> f64 {
        self.nsteps as f64 * self.dt
    }

    pub fn energies(&self) -> Vec<f64> {
        let de = self.spacing();
        self.bins.clone().map(|m| m as f64 * de).collect()
    }

    pub fn nbins(&self) -> usize {
        self.bins.len()
    }
}

/// Run metadata carried with a spectrum.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumMeta {
    pub method: String,
    pub estimator: String,
    pub ensemble: usize,
    pub contributing: usize,
    pub t_max: f64,
    pub seed: u64,
}

/// Intensity on a uniform energy axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    pub energies: Vec<f64>,
    pub intensity: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl SpectrumGrid {
    pub fn new(energies: Vec<f64>, intensity: Vec<f64>, meta: SpectrumMeta) -> Result<Self> {
        if energies.len() != intensity.len() {
            return Err(Error::DimensionMismatch {
                expected: energies.len(),
                got: intensity.len(),
            });
        }
        if energies.is_empty() {
            return Err(invalid("spectrum grid is empty"));
        }
        if energies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("energy axis must be strictly increasing"));
        }
        if intensity.iter().any(|x| !x.is_finite()) {
            return Err(invalid("spectrum intensity is not finite"));
        }
        Ok(SpectrumGrid {
            energies,
            intensity,
            meta,
        })
    }
}

/// Sum over trajectories of |∫ f(t) e^{iEt/ħ} dt|² / density.
#[derive(Debug, Clone, PartialEq)]
pub struct TaAccumulator {
    sum: Vec<f64>,
    contributing: usize,
}

impl TaAccumulator {
    pub fn new(grid: &EnergyGrid) -> Self {
        TaAccumulator {
            sum: vec![0.0; grid.nbins()],
            contributing: 0,
        }
    }

    /// Adds one trajectory. `f` holds `e^{i(S+φ)/ħ}⟨χ|p_t q_t⟩` on the grid up
    /// to (excluding) the rejection step; `density` is the sampling density
    /// at the initial condition.
    pub fn add(
        &mut self,
        f: &[Complex64],
        density: f64,
        grid: &EnergyGrid,
        window: Window,
        tr: &dyn Transform,
    ) {
        if f.is_empty() || !(density > 0.0) {
            return;
        }
        let t_max = grid.t_max();
        let input: Vec<Complex64> = f
            .iter()
            .enumerate()
            .map(|(k, x)| x * window.weight(k as f64 * grid.dt, t_max))
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); grid.nbins()];
        tr.transform(&input, grid.bins.clone(), &mut out);
        let scale = grid.dt * grid.dt / density;
        for (s, g) in self.sum.iter_mut().zip(&out) {
            *s += g.norm_sqr() * scale;
        }
        self.contributing += 1;
    }

    pub fn merge(&mut self, other: &TaAccumulator) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        self.contributing += other.contributing;
    }

    pub fn contributing(&self) -> usize {
        self.contributing
    }

    /// Ensemble average over `total` sampled trajectories, scaled by
    /// 1/(2πħT).
    pub fn finish(
        &self,
        total: usize,
        grid: &EnergyGrid,
        mut meta: SpectrumMeta,
    ) -> Result<SpectrumGrid> {
        if total == 0 || self.contributing == 0 {
            return Err(Error::EmptyEnsemble(alloc::format!(
                "{} of {} trajectories contributed to the time-averaged spectrum",
                self.contributing,
                total
            )));
        }
        let norm = 1.0 / (total as f64 * 2.0 * PI * HBAR * grid.t_max());
        meta.ensemble = total;
        meta.contributing = self.contributing;
        meta.t_max = grid.t_max();
        meta.estimator = "ta".into();
        SpectrumGrid::new(
            grid.energies(),
            self.sum.iter().map(|s| s * norm).collect(),
            meta,
        )
    }
}

/// Sum over trajectories of the Herman–Kluk survival-amplitude integrand.
#[derive(Debug, Clone, PartialEq)]
pub struct HkAccumulator {
    amp: Vec<Complex64>,
    contributing: usize,
}

impl HkAccumulator {
    pub fn new(nsteps: usize) -> Self {
        HkAccumulator {
            amp: vec![Complex64::new(0.0, 0.0); nsteps + 1],
            contributing: 0,
        }
    }

    /// Adds `C_t e^{iS/ħ}⟨χ|z_t⟩⟨z₀|χ⟩ / density` up to the rejection step.
    pub fn add(&mut self, h: &[Complex64]) {
        if h.is_empty() {
            return;
        }
        for (a, x) in self.amp.iter_mut().zip(h) {
            *a += x;
        }
        self.contributing += 1;
    }

    pub fn merge(&mut self, other: &HkAccumulator) {
        for (a, b) in self.amp.iter_mut().zip(&other.amp) {
            *a += b;
        }
        self.contributing += other.contributing;
    }

    pub fn contributing(&self) -> usize {
        self.contributing
    }

    /// Survival amplitude estimate A(t_k) for `total` samples.
    pub fn amplitude(&self, total: usize) -> Vec<Complex64> {
        let inv = 1.0 / total.max(1) as f64;
        self.amp.iter().map(|a| a * inv).collect()
    }

    /// `I(E) = (1/2πħ) Re ∫_{−T}^{T} A(t) w(t) e^{iEt/ħ} dt` with A(−t) = A*(t).
    pub fn finish(
        &self,
        total: usize,
        grid: &EnergyGrid,
        window: Window,
        tr: &dyn Transform,
        mut meta: SpectrumMeta,
    ) -> Result<SpectrumGrid> {
        if total == 0 || self.contributing == 0 {
            return Err(Error::EmptyEnsemble(alloc::format!(
                "{} of {} trajectories contributed to the survival amplitude",
                self.contributing,
                total
            )));
        }
        let t_max = grid.t_max();
        let amp = self.amplitude(total);
        let input: Vec<Complex64> = amp
            .iter()
            .enumerate()
            .map(|(k, a)| a * window.weight(k as f64 * grid.dt, t_max))
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); grid.nbins()];
        tr.transform(&input, grid.bins.clone(), &mut out);
        let scale = grid.dt / (2.0 * PI * HBAR);
        let intensity = out
            .iter()
            .map(|g| scale * (2.0 * g.re - input[0].re))
            .collect();
        meta.ensemble = total;
        meta.contributing = self.contributing;
        meta.t_max = t_max;
        meta.estimator = "hk".into();
        SpectrumGrid::new(grid.energies(), intensity, meta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub energy: f64,
    pub height: f64,
}

/// Detected peaks, ascending in energy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakTable {
    pub peaks: Vec<Peak>,
}

impl PeakTable {
    pub fn energies(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.energy).collect()
    }

    /// The most intense peak within `window` of `level`. A band split into
    /// several lines is read at its dominant line.
    pub fn dominant_near(&self, level: f64, window: f64) -> Option<&Peak> {
        self.peaks
            .iter()
            .filter(|p| (p.energy - level).abs() <= window)
            .fold(None, |best: Option<&Peak>, p| match best {
                Some(b) if b.height >= p.height => Some(b),
                _ => Some(p),
            })
    }
}

/// Thresholds for [`find_peaks_with`]. Fractions refer to the global
/// maximum of the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PeakCriteria {
    pub min_height_fraction: f64,
    /// Height above the higher of the two minima separating the peak from
    /// the nearest higher ground on either side.
    pub min_prominence_fraction: f64,
    pub min_separation: f64,
}

/// Local maxima higher than `min_height_fraction` of the global maximum,
/// refined by a parabola through the three neighbouring points. Peaks closer
/// than `min_separation` are merged into the higher one.
pub fn find_peaks(
    energies: &[f64],
    intensity: &[f64],
    min_height_fraction: f64,
    min_separation: f64,
) -> PeakTable {
    find_peaks_with(
        energies,
        intensity,
        &PeakCriteria {
            min_height_fraction,
            min_separation,
            ..Default::default()
        },
    )
}

fn prominence(y: &[f64], i: usize) -> f64 {
    let top = y[i];
    let mut left = top;
    for &v in y[..i].iter().rev() {
        if v > top {
            break;
        }
        left = left.min(v);
    }
    let mut right = top;
    for &v in &y[i + 1..] {
        if v > top {
            break;
        }
        right = right.min(v);
    }
    top - left.max(right)
}

/// [`find_peaks`] with an additional prominence threshold.
pub fn find_peaks_with(energies: &[f64], intensity: &[f64], criteria: &PeakCriteria) -> PeakTable {
    let n = energies.len().min(intensity.len());
    if n < 3 {
        return PeakTable::default();
    }
    let y = &intensity[..n];
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return PeakTable::default();
    }
    let floor = criteria.min_height_fraction * max;
    let min_prominence = criteria.min_prominence_fraction * max;
    let mut raw = Vec::new();
    for i in 1..n - 1 {
        let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
        if b > a
            && b >= c
            && b >= floor
            && (min_prominence <= 0.0 || prominence(y, i) >= min_prominence)
        {
            let denom = a - 2.0 * b + c;
            let (shift, height) = if denom < 0.0 {
                let s = 0.5 * (a - c) / denom;
                (s, b - 0.25 * (a - c) * s)
            } else {
                (0.0, b)
            };
            let h = energies[i + 1] - energies[i];
            raw.push(Peak {
                energy: energies[i] + shift * h,
                height,
            });
        }
    }
    let mut merged: Vec<Peak> = Vec::with_capacity(raw.len());
    for p in raw {
        match merged.last_mut() {
            Some(last) if p.energy - last.energy < criteria.min_separation => {
                if p.height > last.height {
                    *last = p;
                }
            }
            _ => merged.push(p),
        }
    }
    PeakTable { peaks: merged }
}

/// Result of pairing computed peaks with reference levels.
#[derive(Debug, Clone, PartialEq)]
pub struct MaeReport {
    /// (reference index, peak index) pairs, ordered by reference.
    pub pairs: Vec<(usize, usize)>,
    pub unpaired_references: Vec<usize>,
    /// Mean |E_peak − E_ref| over pairs, `None` without pairs.
    pub mae: Option<f64>,
}

/// Greedy one-to-one pairing, globally nearest first, within `window`.
pub fn mae(peaks: &[f64], references: &[f64], window: f64) -> MaeReport {
    let mut candidates = Vec::new();
    for (r, &er) in references.iter().enumerate() {
        for (p, &ep) in peaks.iter().enumerate() {
            let d = (ep - er).abs();
            if d <= window {
                candidates.push((d, r, p));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut ref_used = vec![false; references.len()];
    let mut peak_used = vec![false; peaks.len()];
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for (d, r, p) in candidates {
        if !ref_used[r] && !peak_used[p] {
            ref_used[r] = true;
            peak_used[p] = true;
            pairs.push((r, p));
            total += d;
        }
    }
    pairs.sort();
    let unpaired_references = (0..references.len()).filter(|&r| !ref_used[r]).collect();
    let mae = if pairs.is_empty() {
        None
    } else {
        Some(total / pairs.len() as f64)
    };
    MaeReport {
        pairs,
        unpaired_references,
        mae,
    }
}

/// Like [`mae`], but consecutive references (sorted) closer than
/// `degeneracy` form one group that is paired as a whole with a single peak;
/// every member then counts once in the mean.
pub fn mae_grouped(peaks: &[f64], references: &[f64], window: f64, degeneracy: f64) -> MaeReport {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (r, &e) in references.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if e - references[*g.last().unwrap()] <= degeneracy => g.push(r),
            _ => groups.push(vec![r]),
        }
    }
    let centres: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&r| references[r]).sum::<f64>() / g.len() as f64)
        .collect();
    let grouped = mae(peaks, &centres, window);
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for &(g, p) in &grouped.pairs {
        for &r in &groups[g] {
            pairs.push((r, p));
            total += (peaks[p] - references[r]).abs();
        }
    }
    let unpaired_references = grouped
        .unpaired_references
        .iter()
        .flat_map(|&g| groups[g].iter().copied())
        .collect();
    let mae = if pairs.is_empty() {
        None
    } else {
        Some(total / pairs.len() as f64)
    };
    MaeReport {
        pairs,
        unpaired_references,
        mae,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pp(q: &[f64], p: &[f64]) -> PhasePoint {
        PhasePoint::new(q.to_vec(), p.to_vec()).unwrap()
    }

    /// ⟨z1|z2⟩ in one dimension by trapezoidal quadrature of the wavefunctions.
    fn overlap_quadrature(q1: f64, p1: f64, q2: f64, p2: f64, g: f64) -> Complex64 {
        let psi = |x: f64, q: f64, p: f64| {
            Complex64::from_polar(
                (g / PI).powf(0.25) * (-g * (x - q) * (x - q) / 2.0).exp(),
                p * (x - q),
            )
        };
        let (a, b, n) = (-20.0, 20.0, 40_000);
        let h = (b - a) / n as f64;
        (0..=n)
            .map(|i| {
                let x = a + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                psi(x, q1, p1).conj() * psi(x, q2, p2) * w * h
            })
            .sum()
    }

    #[test]
    fn overlap_matches_quadrature() {
        for &(q1, p1, q2, p2, g) in &[
            (0.0, 0.0, 2.0, 0.0, 1.0),
            (0.3, 1.7, -0.4, 0.2, 1.0),
            (1.0, -0.5, 0.2, 1.1, 0.6),
            (-0.7, 2.0, 0.5, 2.5, 1.8),
        ] {
            let exact = overlap_quadrature(q1, p1, q2, p2, g);
            let closed = coherent_overlap(&pp(&[q1], &[p1]), &pp(&[q2], &[p2]), &[g]);
            assert!((exact - closed).norm() < 1e-10, "{exact} vs {closed}");
        }
    }

    #[test]
    fn overlap_examples() {
        let g = [1.0, 1.0];
        let c = pp(&[0.0, 0.0], &[3f64.sqrt(), 3f64.sqrt()]);
        assert_eq!(coherent_overlap(&c, &c, &g), Complex64::new(1.0, 0.0));
        let z = pp(&[2.0, 0.0], &c.p);
        assert!((coherent_overlap(&c, &z, &g).norm() - (-1.0f64).exp()).abs() < 1e-15);
        let chi = CoherentState::new(c.clone(), g.to_vec()).unwrap();
        assert!((chi.overlap(&c.q, &c.p) - 1.0).norm() < 1e-15);
        assert_eq!(
            chi.overlap(&[1e200, 0.0], &[1e200, 0.0]),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn husimi_moments() {
        let chi = CoherentState::new(pp(&[0.0, 0.0], &[0.0, 0.0]), vec![1.0, 1.0]).unwrap();
        let n = 100_000;
        let s = sample_husimi(&chi, n, 7);
        for j in 0..2 {
            let mq = s.iter().map(|z| z.q[j]).sum::<f64>() / n as f64;
            let vq = s.iter().map(|z| (z.q[j] - mq).powi(2)).sum::<f64>() / n as f64;
            let mp = s.iter().map(|z| z.p[j]).sum::<f64>() / n as f64;
            let vp = s.iter().map(|z| (z.p[j] - mp).powi(2)).sum::<f64>() / n as f64;
            // |⟨pq|χ⟩|² = exp(−γq²/2 − p²/(2γħ²))
            assert!((vq - 1.0).abs() < 0.02, "var q {vq}");
            assert!((vp - 1.0).abs() < 0.02, "var p {vp}");
        }
    }

    #[test]
    fn sampling_is_reproducible_and_index_addressed() {
        let chi = CoherentState::new(pp(&[0.0, 0.0], &[3f64.sqrt(), 3f64.sqrt()]), vec![1.0, 1.0])
            .unwrap();
        let a = sample_husimi(&chi, 1, 42);
        let b = sample_husimi(&chi, 1, 42);
        assert_eq!(a.len(), 1);
        assert_eq!(a, b);
        let many = sample_husimi(&chi, 10, 42);
        assert_eq!(many[0], a[0]);
        assert_eq!(many[7], chi.sample(42, 7));
        assert_ne!(sample_husimi(&chi, 1, 43), a);
    }

    #[test]
    fn husimi_density_integrates_to_one() {
        let chi = CoherentState::new(pp(&[0.3], &[1.0]), vec![1.3]).unwrap();
        let h = 0.02;
        let mut total = 0.0;
        for i in -500..=500 {
            for k in -500..=500 {
                let z = pp(&[0.3 + i as f64 * h], &[1.0 + k as f64 * h]);
                total += chi.sampling_density(&z) * h * h;
            }
        }
        assert!((total / (2.0 * PI * HBAR) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn combination_is_normalized() {
        let g = vec![1.0, 1.0];
        let a = pp(&[0.5, 0.0], &[1.0, 1.0]);
        let b = pp(&[-0.5, 0.0], &[-1.0, 1.0]);
        let chi = CoherentState::combination(
            g.clone(),
            vec![
                (Complex64::new(1.0, 0.0), a.clone()),
                (Complex64::new(-1.0, 0.0), b.clone()),
            ],
        )
        .unwrap();
        let mut norm = Complex64::new(0.0, 0.0);
        for (ck, zk) in chi.components() {
            for (cl, zl) in chi.components() {
                norm += ck.conj() * cl * coherent_overlap(zk, zl, &g);
            }
        }
        assert!((norm - 1.0).norm() < 1e-14);
        assert!(CoherentState::combination(
            g.clone(),
            vec![
                (Complex64::new(1.0, 0.0), a.clone()),
                (Complex64::new(-1.0, 0.0), a)
            ]
        )
        .is_err());
    }

    #[test]
    fn direct_dft_matches_definition() {
        let x: Vec<Complex64> = (0..37)
            .map(|k| Complex64::new((k as f64 * 0.3).sin(), (k as f64).cos()))
            .collect();
        let l = 64;
        let mut out = vec![Complex64::new(0.0, 0.0); 10];
        DirectDft { len: l }.transform(&x, 5..15, &mut out);
        for (i, m) in (5..15).enumerate() {
            let want: Complex64 = x
                .iter()
                .enumerate()
                .map(|(k, v)| v * Complex64::from_polar(1.0, 2.0 * PI * (m * k) as f64 / l as f64))
                .sum();
            assert!((out[i] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn energy_grid_layout() {
        let g = EnergyGrid::new(0.1, 1000, 4, 0.0, 6.0).unwrap();
        assert_eq!(g.len, 4096);
        assert!((g.spacing() - 2.0 * PI / 409.6).abs() < 1e-14);
        let e = g.energies();
        assert!(e.first().copied().unwrap() >= 0.0 && *e.last().unwrap() <= 6.0);
        assert!(EnergyGrid::new(0.1, 1000, 4, 3.0, 2.0).is_err());
    }

    fn gaussian(e: &[f64], centers: &[(f64, f64)], width: f64) -> Vec<f64> {
        e.iter()
            .map(|&x| {
                centers
                    .iter()
                    .map(|&(c, h)| h * (-(x - c) * (x - c) / (2.0 * width * width)).exp())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn peak_examples() {
        let e: Vec<f64> = (0..3000).map(|i| i as f64 * 0.001).collect();
        let t = find_peaks(&e, &gaussian(&e, &[(1.0, 1.0)], 0.02), 0.05, 0.01);
        assert_eq!(t.peaks.len(), 1);
        assert!((t.peaks[0].energy - 1.0).abs() < 1e-3);
        let t = find_peaks(
            &e,
            &gaussian(&e, &[(1.0, 1.0), (1.05, 0.8)], 0.01),
            0.05,
            0.1,
        );
        assert_eq!(t.peaks.len(), 1);
        assert!((t.peaks[0].energy - 1.0).abs() < 2e-3);
    }

    #[test]
    fn dominant_peak_in_a_band() {
        let table = PeakTable {
            peaks: vec![
                Peak {
                    energy: 0.92,
                    height: 0.1,
                },
                Peak {
                    energy: 0.95,
                    height: 0.3,
                },
                Peak {
                    energy: 0.98,
                    height: 0.2,
                },
                Peak {
                    energy: 1.2,
                    height: 1.0,
                },
            ],
        };
        assert_eq!(table.dominant_near(0.979, 0.15).unwrap().energy, 0.95);
        assert_eq!(table.dominant_near(0.979, 0.01).unwrap().energy, 0.98);
        assert!(table.dominant_near(0.5, 0.1).is_none());
        // equal heights keep the lower line
        let tie = PeakTable {
            peaks: vec![
                Peak {
                    energy: 1.0,
                    height: 1.0,
                },
                Peak {
                    energy: 1.1,
                    height: 1.0,
                },
            ],
        };
        assert_eq!(tie.dominant_near(1.05, 0.1).unwrap().energy, 1.0);
    }

    #[test]
    fn prominence_drops_shoulder_ripples() {
        let e: Vec<f64> = (0..10).map(f64::from).collect();
        // a tall line, a ripple on its flank and a weak isolated line
        let y = [0.0, 0.2, 1.0, 0.2, 0.22, 0.1, 0.0, 0.05, 0.0, 0.0];
        assert_eq!(find_peaks(&e, &y, 0.01, 0.0).peaks.len(), 3);
        assert!((prominence(&y, 4) - 0.02).abs() < 1e-12);
        assert!((prominence(&y, 7) - 0.05).abs() < 1e-12);
        assert_eq!(prominence(&y, 2), 1.0);
        let c = PeakCriteria {
            min_height_fraction: 0.01,
            min_prominence_fraction: 0.03,
            min_separation: 0.0,
        };
        let kept = find_peaks_with(&e, &y, &c).energies();
        assert_eq!(kept.len(), 2);
        assert!((kept[0] - 2.0).abs() < 0.5 && (kept[1] - 7.0).abs() < 0.5);
    }

    #[test]
    fn peak_comb() {
        let e: Vec<f64> = (0..7000).map(|i| i as f64 * 0.001).collect();
        let comb: Vec<(f64, f64)> = (1..=6)
            .map(|n| (n as f64 + 0.0003 * n as f64, 1.0 / n as f64))
            .collect();
        let t = find_peaks(&e, &gaussian(&e, &comb, 0.03), 0.05, 0.2);
        assert_eq!(t.peaks.len(), 6);
        for (p, c) in t.peaks.iter().zip(&comb) {
            assert!((p.energy - c.0).abs() < 1e-3);
        }
    }

    #[test]
    fn mae_examples() {
        let refs: Vec<f64> = (1..=10).map(|n| n as f64).collect();
        assert_eq!(mae(&refs, &refs, 0.1).mae, Some(0.0));
        let shifted: Vec<f64> = refs.iter().map(|x| x + 0.01).collect();
        assert!((mae(&shifted, &refs, 0.1).mae.unwrap() - 0.01).abs() < 1e-12);
        let r = mae(&[1.0], &[1.0, 5.0], 0.1);
        assert_eq!(r.unpaired_references, vec![1]);
        assert_eq!(mae(&[9.0], &[1.0], 0.1).mae, None);
    }

    #[test]
    fn mae_of_target_time_averaged_table() {
        let exact = [
            0.998, 1.989, 1.989, 2.951, 2.984, 2.984, 3.917, 3.918, 3.980, 3.984, 4.856, 4.888,
            4.888, 4.985, 4.985, 5.800, 5.800, 5.853, 5.872,
        ];
        let sc = [
            0.995, 1.988, 1.988, 2.901, 2.983, 2.983, 3.893, 3.893, 3.975, 3.975, 4.805, 4.886,
            4.886, 4.970, 4.970, 5.798, 5.798, 5.859, 5.879,
        ];
        let r = mae(&sc, &exact, 0.1);
        assert_eq!(r.pairs.len(), 19);
        assert!((r.mae.unwrap() - 0.011).abs() < 0.001, "{:?}", r.mae);

        // a spectrum shows one peak per degenerate pair
        let mut distinct = sc.to_vec();
        distinct.dedup();
        let g = mae_grouped(&distinct, &exact, 0.1, 0.005);
        assert_eq!(g.pairs.len(), 19);
        assert!(g.unpaired_references.is_empty());
        assert!((g.mae.unwrap() - r.mae.unwrap()).abs() < 1e-12);
        let plain = mae(&distinct, &exact, 0.1);
        assert!(plain.pairs.len() < 19);
    }

    #[test]
    fn grouped_pairing_without_degeneracy_is_plain_pairing() {
        let refs = [1.0, 2.0, 2.04, 3.0];
        let peaks = [1.01, 2.02, 2.9];
        assert_eq!(
            mae_grouped(&peaks, &refs, 0.2, 0.0),
            mae(&peaks, &refs, 0.2)
        );
        let g = mae_grouped(&peaks, &refs, 0.2, 0.05);
        assert_eq!(g.pairs, vec![(0, 0), (1, 1), (2, 1), (3, 2)]);
        assert!((g.mae.unwrap() - (0.01 + 0.02 + 0.02 + 0.1) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn estimators_on_a_synthetic_two_level_signal() {
        // f(t) = a e^{−iE₁t} + b e^{−iE₂t}: TA peaks sit at E₁ and E₂
        let dt = 0.1;
        let n = 2000;
        let grid = EnergyGrid::new(dt, n, 4, 0.0, 4.0).unwrap();
        let tr = DirectDft { len: grid.len };
        let f: Vec<Complex64> = (0..=n)
            .map(|k| {
                let t = k as f64 * dt;
                Complex64::from_polar(0.8, -t) + Complex64::from_polar(0.6, -2.5 * t)
            })
            .collect();
        let mut ta = TaAccumulator::new(&grid);
        ta.add(&f, 1.0, &grid, Window::Rectangular, &tr);
        let s = ta.finish(1, &grid, SpectrumMeta::default()).unwrap();
        let peaks = find_peaks(&s.energies, &s.intensity, 0.1, 0.2).energies();
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0] - 1.0).abs() < grid.spacing());
        assert!((peaks[1] - 2.5).abs() < grid.spacing());

        let mut hk = HkAccumulator::new(n);
        let amp: Vec<Complex64> = (0..=n)
            .map(|k| {
                let t = k as f64 * dt;
                Complex64::from_polar(0.64, -t) + Complex64::from_polar(0.36, -2.5 * t)
            })
            .collect();
        hk.add(&amp);
        let s = hk
            .finish(1, &grid, Window::Hann, &tr, SpectrumMeta::default())
            .unwrap();
        let peaks = find_peaks(&s.energies, &s.intensity, 0.1, 0.2);
        assert_eq!(peaks.peaks.len(), 2);
        assert!((peaks.peaks[0].energy - 1.0).abs() < grid.spacing());
        assert!((peaks.peaks[1].energy - 2.5).abs() < grid.spacing());
        assert!(peaks.peaks[0].height > peaks.peaks[1].height);
    }

    #[test]
    fn empty_ensemble_is_an_error() {
        let grid = EnergyGrid::new(0.1, 10, 4, 0.0, 4.0).unwrap();
        let tr = DirectDft { len: grid.len };
        assert!(matches!(
            TaAccumulator::new(&grid).finish(5, &grid, SpectrumMeta::default()),
            Err(Error::EmptyEnsemble(_))
        ));
        assert!(HkAccumulator::new(10)
            .finish(5, &grid, Window::Hann, &tr, SpectrumMeta::default())
            .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn overlap_modulus_is_reflection_symmetric(
            dq in -3.0f64..3.0, dp in -3.0f64..3.0, g in 0.2f64..3.0, p0 in -2.0f64..2.0,
        ) {
            let c = pp(&[0.0], &[p0]);
            let a = coherent_overlap(&c, &pp(&[dq], &[p0 + dp]), &[g]);
            let b = coherent_overlap(&c, &pp(&[-dq], &[p0 - dp]), &[g]);
            prop_assert!((a.norm() - b.norm()).abs() < 1e-14);
            prop_assert!(a.norm() <= 1.0 + 1e-15);
            // hermiticity
            let back = coherent_overlap(&pp(&[dq], &[p0 + dp]), &c, &[g]);
            prop_assert!((back - a.conj()).norm() < 1e-14);
        }
    }
}
