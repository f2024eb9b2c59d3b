use ndarray::Array2;

use crate::audio::{SpectralFrameSeries, StftConfig};
use crate::error::{Error, Result};

/// Constant-Q filter bank realised as a sparse frequency-domain kernel over
/// STFT magnitude bins.
///
/// Each row is a raised-cosine bump centred on the bin frequency whose
/// half-width is the constant-Q bandwidth `f / Q`, widened to at least one
/// STFT bin so that narrow low-frequency bins still interpolate between
/// their neighbouring STFT bins. Rows are normalised to unit sum.
#[derive(Debug, Clone)]
pub struct CqtKernel {
    pub center_freqs: Vec<f64>,
    /// Equivalent time-domain window length `Q * sr / f` per bin, in samples.
    pub window_lengths: Vec<f64>,
    pub bins_per_octave: usize,
    rows: Vec<(usize, Vec<f64>)>,
    stft_bins: usize,
}

impl CqtKernel {
    /// Bins start at `fmin` and continue while below `fmax` (exclusive), the
    /// Nyquist frequency of `stft`, and `max_bins` when given.
    pub fn new(
        fmin: f64,
        fmax: f64,
        max_bins: Option<usize>,
        bins_per_octave: usize,
        stft: &StftConfig,
    ) -> Result<Self> {
        if !(fmin > 0.0) || bins_per_octave == 0 {
            return Err(Error::invalid("CQT needs fmin > 0 and bins_per_octave > 0"));
        }
        let sr = stft.sample_rate;
        let nyquist = sr / 2.0;
        let q = 1.0 / (2f64.powf(1.0 / bins_per_octave as f64) - 1.0);
        let df = sr / stft.window_samples as f64;
        let stft_bins = stft.bins();

        let mut center_freqs = Vec::new();
        let mut window_lengths = Vec::new();
        let mut rows = Vec::new();
        for k in 0.. {
            if max_bins.is_some_and(|m| k >= m) {
                break;
            }
            let f = fmin * 2f64.powf(k as f64 / bins_per_octave as f64);
            if f >= fmax || f >= nyquist {
                break;
            }
            let half_width = (f / q).max(df);
            let lo = ((f - half_width) / df).ceil().max(0.0) as usize;
            let hi = (((f + half_width) / df).floor() as usize).min(stft_bins - 1);
            let mut weights: Vec<f64> = (lo..=hi)
                .map(|j| {
                    let d = (j as f64 * df - f) / half_width;
                    if d.abs() >= 1.0 {
                        0.0
                    } else {
                        (0.5 * std::f64::consts::PI * d).cos().powi(2)
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            if total > 0.0 {
                weights.iter_mut().for_each(|w| *w /= total);
            }
            center_freqs.push(f);
            window_lengths.push(q * sr / f);
            rows.push((lo, weights));
        }
        if center_freqs.is_empty() {
            return Err(Error::invalid(format!(
                "no CQT bins between {fmin} Hz and {} Hz",
                fmax.min(nyquist)
            )));
        }
        Ok(Self {
            center_freqs,
            window_lengths,
            bins_per_octave,
            rows,
            stft_bins,
        })
    }

    pub fn len(&self) -> usize {
        self.center_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center_freqs.is_empty()
    }

    /// Frames × CQT bins.
    pub fn apply(&self, spec: &SpectralFrameSeries) -> Array2<f64> {
        assert_eq!(spec.magnitudes.ncols(), self.stft_bins, "STFT bin count mismatch");
        let mut out = Array2::zeros((spec.frames(), self.len()));
        for (frame, mut dst) in spec.magnitudes.rows().into_iter().zip(out.rows_mut()) {
            let frame = frame.as_slice().expect("standard layout");
            for ((lo, weights), d) in self.rows.iter().zip(dst.iter_mut()) {
                *d = weights
                    .iter()
                    .zip(&frame[*lo..*lo + weights.len()])
                    .map(|(w, m)| w * m)
                    .sum();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centre_frequencies_are_geometric_and_below_nyquist() {
        let cfg = StftConfig::mcqt();
        let k = CqtKernel::new(196.0, f64::INFINITY, None, 96, &cfg).unwrap();
        let ratio = 2f64.powf(1.0 / 96.0);
        for w in k.center_freqs.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
        assert!(k.center_freqs.iter().all(|&f| f < cfg.sample_rate / 2.0));
        // 196 Hz * 2^(k/96) < 5512.5 Hz  =>  k <= 462
        assert_eq!(k.len(), 463);
    }
}
