use ndarray::Array2;

use super::{quantile_sorted, CqtKernel, FeatureKind, FeatureMatrix};
use crate::audio::SpectralFrameSeries;
use crate::error::Result;

pub const MCQT_BINS: usize = 304;
const BINS_PER_OCTAVE: usize = 96;
const FMIN: f64 = 196.0;
/// First kept bin: 392 Hz, one octave above `FMIN`.
const FIRST_KEPT: usize = BINS_PER_OCTAVE;

/// Melodic constant-Q transform.
///
/// A 96-bins-per-octave CQT from 196 Hz to Nyquist is averaged with its
/// higher octaves, restricted to the 304 bins from 392 Hz, log-compressed
/// with `ln(|q| + 1)`, and every value below the frame's third quartile is
/// zeroed.
pub fn compute_mcqt(spec: &SpectralFrameSeries) -> Result<FeatureMatrix> {
    let kernel = CqtKernel::new(FMIN, f64::INFINITY, None, BINS_PER_OCTAVE, &spec.config)?;
    let cq = kernel.apply(spec);
    let n = kernel.len();
    let frames = cq.nrows();

    let mut out = Array2::<f64>::zeros((frames, MCQT_BINS));
    let mut sorted = Vec::with_capacity(MCQT_BINS);
    for (src, mut dst) in cq.rows().into_iter().zip(out.rows_mut()) {
        for (i, d) in dst.iter_mut().enumerate() {
            let k = FIRST_KEPT + i;
            if k >= n {
                break;
            }
            let (sum, count) = (k..n)
                .step_by(BINS_PER_OCTAVE)
                .fold((0.0, 0usize), |(s, c), j| (s + src[j], c + 1));
            *d = (sum / count as f64).abs().ln_1p();
        }
        sorted.clear();
        sorted.extend(dst.iter().copied());
        sorted.sort_by(f64::total_cmp);
        let q3 = quantile_sorted(&sorted, 0.75);
        dst.mapv_inplace(|v| (v - q3).max(0.0));
    }
    FeatureMatrix::new(FeatureKind::Mcqt, out, spec.frame_times.clone())
}
