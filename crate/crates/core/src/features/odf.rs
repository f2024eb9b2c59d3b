use ndarray::Array2;

use super::{quantile, FeatureKind, FeatureMatrix};
use crate::audio::SpectralFrameSeries;
use crate::error::Result;

const MU: f64 = 1e6;
/// Band edges in Hz: [0, 150], (150, 500], (500, 11025].
pub const ODF_BANDS: [(f64, f64); 3] = [(0.0, 150.0), (150.0, 500.0), (500.0, 11025.0)];
const LOCAL_MEAN_SECONDS: f64 = 0.5;
const ACTIVE_FLOOR: f64 = 0.01;

/// Three-band spectral-flux onset detection function.
///
/// µ-law compression of the max-normalised magnitudes, first-order temporal
/// difference, per-band sum, subtraction of a Hann-weighted centred local
/// mean, half-wave rectification and a 9th-decile clip.
///
/// The clip level is the 0.9-quantile of the active cells, those above
/// `ACTIVE_FLOOR` times the maximum. A rectified flux is mostly zero, and a
/// quantile over all cells would clip a sparse function to nothing.
pub fn compute_odf(spec: &SpectralFrameSeries) -> Result<FeatureMatrix> {
    let mags = &spec.magnitudes;
    let frames = mags.nrows();
    let max = mags.iter().copied().fold(0.0, f64::max);

    let band_of: Vec<Option<usize>> = spec
        .bin_freqs
        .iter()
        .map(|&f| {
            ODF_BANDS
                .iter()
                .position(|&(lo, hi)| if lo == 0.0 { f <= hi } else { f > lo && f <= hi })
        })
        .collect();

    let mut flux = Array2::<f64>::zeros((frames, 3));
    if max > 0.0 {
        let norm = (1.0 + MU).ln();
        let compressed = mags.mapv(|x| (1.0 + MU * x / max).ln() / norm);
        for t in 1..frames {
            for (k, band) in band_of.iter().enumerate() {
                if let Some(b) = band {
                    flux[[t, *b]] += compressed[[t, k]] - compressed[[t - 1, k]];
                }
            }
        }
    }

    let hop = spec.config.hop_seconds();
    let half = ((LOCAL_MEAN_SECONDS / hop).round() as usize / 2).max(1);
    let weights: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let k = i as f64 - half as f64;
            0.5 + 0.5 * (std::f64::consts::PI * k / (half + 1) as f64).cos()
        })
        .collect();
    let mut odf = Array2::<f64>::zeros((frames, 3));
    for b in 0..3 {
        let column = flux.column(b);
        for t in 0..frames {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(frames - 1);
            let (mut sum, mut norm) = (0.0, 0.0);
            for m in lo..=hi {
                let w = weights[m + half - t];
                sum += w * column[m];
                norm += w;
            }
            odf[[t, b]] = (column[t] - sum / norm).max(0.0);
        }
    }

    let peak = odf.iter().copied().fold(0.0, f64::max);
    let active: Vec<f64> = odf
        .iter()
        .copied()
        .filter(|&v| v > ACTIVE_FLOOR * peak)
        .collect();
    if peak > 0.0 {
        let level = quantile(&active, 0.9);
        odf.mapv_inplace(|v| v.min(level));
    }
    FeatureMatrix::new(FeatureKind::Odf, odf, spec.frame_times.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{stft_magnitude, AudioClip, StftConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn odf_of(samples: Vec<f64>) -> FeatureMatrix {
        let clip = AudioClip::new(samples, 44100.0).unwrap();
        compute_odf(&stft_magnitude(&clip, &StftConfig::odf()).unwrap()).unwrap()
    }

    #[test]
    fn silence_is_zero() {
        let m = odf_of(vec![0.0; 44100 * 2]);
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn click_gives_one_peak_per_band_near_onset() {
        let mut x = vec![0.0; 44100 * 3];
        let t0 = 1.5;
        let start = (t0 * 44100.0) as usize;
        // short broadband burst: decaying noise
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..200 {
            x[start + i] = (rng.gen::<f64>() * 2.0 - 1.0) * (-(i as f64) / 40.0).exp();
        }
        let m = odf_of(x);
        let hop = StftConfig::odf().hop_seconds();
        for b in 0..3 {
            let col = m.values.column(b);
            let max = col.iter().copied().fold(0.0, f64::max);
            assert!(max > 0.0, "band {b} empty");
            let peaks: Vec<usize> = (0..m.frames()).filter(|&t| col[t] == max).collect();
            let t_peak = m.frame_times[peaks[0]];
            assert_eq!(peaks.len(), 1, "band {b}: {} tied maxima", peaks.len());
            assert!((t_peak - t0).abs() <= hop + 1e-9, "band {b}: peak at {t_peak}");
            // everything away from the onset is well below the peak
            for (t, &v) in col.iter().enumerate() {
                if (m.frame_times[t] - t0).abs() > 0.05 {
                    assert!(v < 0.5 * max, "band {b}: spurious value {v} at {}", m.frame_times[t]);
                }
            }
        }
    }

    #[test]
    fn steady_sine_is_flat_after_attack() {
        let sr = 44100.0;
        let onset = 1.0;
        // Five cycles per hop and ten per window: bin-centred and identical in
        // every frame. Off-bin tones leak into far bins with a phase-dependent
        // level that mu = 1e6 lifts well above 1% of the attack.
        let freq = 5.0 * sr / 512.0;
        let x: Vec<f64> = (0..(sr * 4.0) as usize)
            .map(|i| {
                let t = i as f64 / sr;
                if t < onset { 0.0 } else { 0.5 * (2.0 * PI * freq * t).sin() }
            })
            .collect();
        let m = odf_of(x);
        let attack = m.values.iter().copied().fold(0.0, f64::max);
        assert!(attack > 0.0);
        for (t, row) in m.values.rows().into_iter().enumerate() {
            if m.frame_times[t] > onset + 0.1 {
                for &v in row {
                    assert!(v <= 0.01 * attack, "frame {t}: {v} vs attack {attack}");
                }
            }
        }
    }
}
