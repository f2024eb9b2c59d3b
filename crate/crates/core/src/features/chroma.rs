use ndarray::Array2;

use super::{CqtKernel, FeatureKind, FeatureMatrix};
use crate::audio::SpectralFrameSeries;
use crate::error::Result;

pub const CHROMA_CQT_BINS: usize = 108;
pub const CHROMA_BINS_PER_OCTAVE: usize = 36;
const MEDIAN_LEN: usize = 8;
/// Pitch class (C = 0) of the lowest semitone of the filter bank.
const LOWEST_PITCH_CLASS: usize = 9;

/// 36-bin pitch-class profile whose bin `3s + 1` sits on semitone `s`
/// counted from A2.
fn lowest_bin_freq() -> f64 {
    110.0 * 2f64.powf(-1.0 / CHROMA_BINS_PER_OCTAVE as f64)
}

/// Constant-Q spectrum → octave-folded 36-bin profile → tuning shift →
/// length-8 median filter → 12-bin chroma (C first).
pub fn compute_chroma(spec: &SpectralFrameSeries) -> Result<FeatureMatrix> {
    let kernel = CqtKernel::new(
        lowest_bin_freq(),
        f64::INFINITY,
        Some(CHROMA_CQT_BINS),
        CHROMA_BINS_PER_OCTAVE,
        &spec.config,
    )?;
    let cq = kernel.apply(spec);
    let frames = cq.nrows();

    let mut profile = Array2::<f64>::zeros((frames, CHROMA_BINS_PER_OCTAVE));
    for (src, mut dst) in cq.rows().into_iter().zip(profile.rows_mut()) {
        for (k, v) in src.iter().enumerate() {
            dst[k % CHROMA_BINS_PER_OCTAVE] += v;
        }
    }

    let shift = estimate_tuning_shift(&profile);
    if shift != 0 {
        let n = CHROMA_BINS_PER_OCTAVE as isize;
        let shifted = Array2::from_shape_fn(profile.raw_dim(), |(t, b)| {
            profile[[t, (b as isize + shift).rem_euclid(n) as usize]]
        });
        profile = shifted;
    }

    let smoothed = median_filter_time(&profile, MEDIAN_LEN);

    let mut chroma = Array2::<f64>::zeros((frames, 12));
    for (src, mut dst) in smoothed.rows().into_iter().zip(chroma.rows_mut()) {
        for semitone in 0..12 {
            let avg = (src[3 * semitone] + src[3 * semitone + 1] + src[3 * semitone + 2]) / 3.0;
            dst[(LOWEST_PITCH_CLASS + semitone) % 12] = avg;
        }
    }
    FeatureMatrix::new(FeatureKind::Chroma, chroma, spec.frame_times.clone())
}

/// Offset, in 36-bin units, of the spectral peaks from the semitone centres.
///
/// Every circular local maximum of every frame is refined by parabolic
/// interpolation; its deviation from the nearest semitone centre is rounded
/// to a whole bin and accumulated into a magnitude-weighted histogram over
/// {-1, 0, +1}. The mode is returned.
fn estimate_tuning_shift(profile: &Array2<f64>) -> isize {
    let n = profile.ncols();
    let mut hist = [0.0f64; 3];
    for row in profile.rows() {
        for b in 0..n {
            let left = row[(b + n - 1) % n];
            let centre = row[b];
            let right = row[(b + 1) % n];
            if centre <= 0.0 || centre <= left || centre < right {
                continue;
            }
            let denom = left - 2.0 * centre + right;
            let offset = if denom.abs() > f64::EPSILON {
                (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            let pos = b as f64 + offset;
            let nearest_centre = 3.0 * ((pos - 1.0) / 3.0).round() + 1.0;
            let dev = (pos - nearest_centre).round().clamp(-1.0, 1.0) as isize;
            hist[(dev + 1) as usize] += centre;
        }
    }
    // ties resolve to "no shift"
    let best = [1usize, 0, 2]
        .into_iter()
        .fold(1usize, |best, i| if hist[i] > hist[best] { i } else { best });
    best as isize - 1
}

/// Median over frames `[t - len/2, t + len/2 - 1]`, truncated at the edges.
/// Even-sized windows average the two middle values.
pub(crate) fn median_filter_time(values: &Array2<f64>, len: usize) -> Array2<f64> {
    let frames = values.nrows();
    let before = len / 2;
    let after = len - before - 1;
    let mut out = Array2::zeros(values.raw_dim());
    let mut buf = Vec::with_capacity(len);
    for col in 0..values.ncols() {
        for t in 0..frames {
            let lo = t.saturating_sub(before);
            let hi = (t + after).min(frames - 1);
            buf.clear();
            buf.extend((lo..=hi).map(|i| values[[i, col]]));
            buf.sort_by(f64::total_cmp);
            let m = buf.len();
            out[[t, col]] = if m % 2 == 1 {
                buf[m / 2]
            } else {
                0.5 * (buf[m / 2 - 1] + buf[m / 2])
            };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{resample, stft_magnitude, AudioClip, StftConfig};
    use std::f64::consts::PI;

    fn tones(freqs: &[f64], secs: f64) -> AudioClip {
        let sr = 44100.0;
        let n = (sr * secs) as usize;
        AudioClip::new(
            (0..n)
                .map(|i| {
                    freqs
                        .iter()
                        .map(|f| 0.2 * (2.0 * PI * f * i as f64 / sr).sin())
                        .sum()
                })
                .collect(),
            sr,
        )
        .unwrap()
    }

    fn chroma_of(clip: &AudioClip) -> FeatureMatrix {
        let cfg = StftConfig::chroma();
        compute_chroma(&stft_magnitude(&resample(clip, cfg.sample_rate), &cfg).unwrap()).unwrap()
    }

    fn steady_rows(m: &FeatureMatrix) -> impl Iterator<Item = ndarray::ArrayView1<'_, f64>> {
        let n = m.frames();
        m.values.rows().into_iter().skip(3).take(n.saturating_sub(6))
    }

    #[test]
    fn a440_maps_to_pitch_class_a() {
        let m = chroma_of(&tones(&[440.0], 3.0));
        for row in steady_rows(&m) {
            let argmax = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(argmax, 9);
        }
    }

    #[test]
    fn c_major_triad_top_three() {
        let m = chroma_of(&tones(&[261.63, 329.63, 392.0], 3.0));
        for row in steady_rows(&m) {
            let mut idx: Vec<usize> = (0..12).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
            let mut top: Vec<usize> = idx[..3].to_vec();
            top.sort();
            assert_eq!(top, vec![0, 4, 7]);
        }
    }

    #[test]
    fn silence_gives_zero_chroma() {
        let m = chroma_of(&AudioClip::new(vec![0.0; 44100 * 2], 44100.0).unwrap());
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn even_median_window_covers_four_before_three_after() {
        let values = Array2::from_shape_vec((10, 1), (0..10).map(f64::from).collect()).unwrap();
        let out = median_filter_time(&values, 8);
        // t = 5 covers frames 1..=8 → median (4 + 5) / 2
        assert_eq!(out[[5, 0]], 4.5);
        // t = 0 covers frames 0..=3
        assert_eq!(out[[0, 0]], 1.5);
    }
}
