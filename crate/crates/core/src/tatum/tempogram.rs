use ndarray::Array2;
use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};

pub const TEMPOGRAM_WINDOW_SECONDS: f64 = 6.0;
pub const MIN_TEMPO: f64 = 60.0;
pub const MAX_TEMPO: f64 = 500.0;

/// Fourier tempogram of a novelty curve.
///
/// One frame per novelty frame; frame `t` analyses a Hann-weighted window of
/// `2 * half_window + 1` novelty frames centred on `t` (zero outside the
/// curve). `phases[t][b]` is the phase `φ` such that the local pulse reads
/// `cos(2π f n / frame_rate − φ)` with `n` the novelty frame index.
#[derive(Debug, Clone)]
pub struct Tempogram {
    pub magnitudes: Array2<f64>,
    pub phases: Array2<f64>,
    /// Repetitions per minute, one per column.
    pub tempo_axis: Vec<f64>,
    pub frame_times: Vec<f64>,
    pub frame_rate: f64,
    pub half_window: usize,
}

impl Tempogram {
    pub fn frames(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn bins(&self) -> usize {
        self.magnitudes.ncols()
    }

    /// Centred Hann weight at offset `k` frames from the window centre.
    pub fn window_weight(&self, k: isize) -> f64 {
        hann_weight(k, self.half_window)
    }
}

pub(crate) fn hann_weight(k: isize, half: usize) -> f64 {
    if k.unsigned_abs() > half {
        return 0.0;
    }
    let a = std::f64::consts::PI / (half + 1) as f64;
    0.5 + 0.5 * (a * k as f64).cos()
}

/// Novelty curve: the ODF bands summed per frame.
pub fn novelty_curve(odf: &FeatureMatrix) -> Vec<f64> {
    odf.values.rows().into_iter().map(|r| r.sum()).collect()
}

pub fn frame_rate_of(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::InputTooShort {
            needed: 2,
            got: times.len(),
        });
    }
    Ok((times.len() - 1) as f64 / (times[times.len() - 1] - times[0]))
}

pub fn compute_tempogram(odf: &FeatureMatrix) -> Result<Tempogram> {
    if odf.kind != FeatureKind::Odf {
        return Err(Error::invalid(format!("tempogram needs an ODF, got {}", odf.kind)));
    }
    let novelty = novelty_curve(odf);
    let frame_rate = frame_rate_of(&odf.frame_times)?;
    let tempi: Vec<f64> = (MIN_TEMPO as usize..=MAX_TEMPO as usize)
        .map(|t| t as f64)
        .collect();
    tempogram_from_novelty(&novelty, &odf.frame_times, frame_rate, &tempi)
}

/// Windowed DFT of `novelty` at every frame and every tempo in `tempi`.
///
/// The Hann window `0.5 + 0.5 cos(a k)` splits into three complex
/// exponentials, so each frame's windowed sum is a combination of three
/// running sums over `[t - h, t + h]`, read off prefix sums in O(1).
pub fn tempogram_from_novelty(
    novelty: &[f64],
    frame_times: &[f64],
    frame_rate: f64,
    tempi: &[f64],
) -> Result<Tempogram> {
    let half = ((TEMPOGRAM_WINDOW_SECONDS * frame_rate).round() as usize) / 2;
    let span = 2 * half + 1;
    let len = novelty.len();
    if len < span {
        return Err(Error::InputTooShort {
            needed: span,
            got: len,
        });
    }
    let a = std::f64::consts::PI / (half + 1) as f64;
    let rot_pos: Vec<Complex<f64>> = (0..len).map(|m| Complex::from_polar(1.0, a * m as f64)).collect();

    let mut magnitudes = Array2::zeros((len, tempi.len()));
    let mut phases = Array2::zeros((len, tempi.len()));
    let mut p0 = vec![Complex::<f64>::default(); len + 1];
    let mut pp = vec![Complex::<f64>::default(); len + 1];
    let mut pm = vec![Complex::<f64>::default(); len + 1];
    for (b, &tempo) in tempi.iter().enumerate() {
        let theta = 2.0 * std::f64::consts::PI * tempo / 60.0 / frame_rate;
        for m in 0..len {
            let g = Complex::from_polar(novelty[m], -theta * m as f64);
            p0[m + 1] = p0[m] + g;
            pp[m + 1] = pp[m] + g * rot_pos[m];
            pm[m + 1] = pm[m] + g * rot_pos[m].conj();
        }
        for t in 0..len {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(len - 1) + 1;
            let s0 = p0[hi] - p0[lo];
            let sp = pp[hi] - pp[lo];
            let sm = pm[hi] - pm[lo];
            let f = s0 * 0.5 + (rot_pos[t].conj() * sp + rot_pos[t] * sm) * 0.25;
            let mag = f.norm();
            magnitudes[[t, b]] = mag;
            phases[[t, b]] = if mag > 0.0 { -f.arg() } else { 0.0 };
        }
    }
    Ok(Tempogram {
        magnitudes,
        phases,
        tempo_axis: tempi.to_vec(),
        frame_times: frame_times.to_vec(),
        frame_rate,
        half_window: half,
    })
}
