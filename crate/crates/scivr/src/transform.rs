use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use scivr_core::spectrum::Transform;
use scivr_core::Complex64;

/// Zero-padded inverse FFT of fixed length. Plans are shared; each call
/// allocates its own buffers so one instance serves every worker.
pub struct FftTransform {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl FftTransform {
    pub fn new(len: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_inverse(len);
        FftTransform { len, fft }
    }
}

impl Transform for FftTransform {
    fn len(&self) -> usize {
        self.len
    }

    fn transform(&self, input: &[Complex64], bins: std::ops::Range<usize>, out: &mut [Complex64]) {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        let n = input.len().min(self.len);
        buf[..n].copy_from_slice(&input[..n]);
        self.fft.process(&mut buf);
        for (o, m) in out.iter_mut().zip(bins) {
            *o = buf[m];
        }
    }
}
