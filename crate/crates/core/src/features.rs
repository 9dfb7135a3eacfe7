//! Angular-domain log-amplitude features fed to the predictors.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::phy::ChannelSnapshot;
use crate::real::Real;

/// Floor added to the magnitude before the logarithm.
pub const LOG_FLOOR: f64 = 1e-9;

/// Reusable FFT plan for one array size.
pub struct Preprocessor<T: Real> {
    fft: Arc<dyn Fft<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> Preprocessor<T> {
    pub fn new(num_antennas: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(num_antennas);
        let scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
        Self { fft, scratch }
    }

    /// `ln(|DFT_N(h)| + 1e-9)` over the antenna dimension, written into `out`.
    pub fn apply_into(&mut self, h: &[Complex<T>], out: &mut Vec<T>) {
        assert_eq!(h.len(), self.fft.len(), "snapshot length does not match the FFT plan");
        let mut buf = h.to_vec();
        self.fft.process_with_scratch(&mut buf, &mut self.scratch);
        let floor = T::of(LOG_FLOOR);
        out.clear();
        out.extend(buf.iter().map(|y| (y.norm() + floor).ln()));
    }

    pub fn apply(&mut self, h: &[Complex<T>]) -> Vec<T> {
        let mut out = Vec::with_capacity(h.len());
        self.apply_into(h, &mut out);
        out
    }
}

/// One-shot preprocessing of a snapshot.
pub fn preprocess_csi<T: Real>(h: &ChannelSnapshot<T>) -> Vec<T> {
    Preprocessor::new(h.len()).apply(&h.coefficients)
}
