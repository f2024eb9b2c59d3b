//! The four musical-attribute representations: harmony (chroma), bass
//! (low-frequency spectrogram), rhythm (three-band onset detection function)
//! and melody (melodic constant-Q transform).

mod chroma;
mod cqt;
mod mcqt;
mod odf;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio::{resample, stft_magnitude, AudioClip, SpectralFrameSeries, StftConfig};
use crate::error::{Error, Result};

pub use chroma::{compute_chroma, CHROMA_BINS_PER_OCTAVE, CHROMA_CQT_BINS};
pub use cqt::CqtKernel;
pub use mcqt::{compute_mcqt, MCQT_BINS};
pub use odf::{compute_odf, ODF_BANDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Chroma,
    Lfs,
    Odf,
    Mcqt,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::Chroma,
        FeatureKind::Lfs,
        FeatureKind::Odf,
        FeatureKind::Mcqt,
    ];

    pub fn bins(self) -> usize {
        match self {
            FeatureKind::Chroma => 12,
            FeatureKind::Lfs => 10,
            FeatureKind::Odf => 3,
            FeatureKind::Mcqt => 304,
        }
    }

    pub fn stft_config(self) -> StftConfig {
        match self {
            FeatureKind::Chroma => StftConfig::chroma(),
            FeatureKind::Lfs => StftConfig::lfs(),
            FeatureKind::Odf => StftConfig::odf(),
            FeatureKind::Mcqt => StftConfig::mcqt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Chroma => "chroma",
            FeatureKind::Lfs => "lfs",
            FeatureKind::Odf => "odf",
            FeatureKind::Mcqt => "mcqt",
        }
    }

    /// Computes the representation from a spectrogram made with
    /// [`FeatureKind::stft_config`].
    pub fn compute(self, spec: &SpectralFrameSeries) -> Result<FeatureMatrix> {
        match self {
            FeatureKind::Chroma => compute_chroma(spec),
            FeatureKind::Lfs => compute_lfs(spec),
            FeatureKind::Odf => compute_odf(spec),
            FeatureKind::Mcqt => compute_mcqt(spec),
        }
    }

    /// Resamples `clip` to this feature's rate, runs the STFT and computes
    /// the feature.
    pub fn extract(self, clip: &AudioClip) -> Result<FeatureMatrix> {
        let cfg = self.stft_config();
        let resampled = resample(clip, cfg.sample_rate);
        self.compute(&stft_magnitude(&resampled, &cfg)?)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chroma" | "hcnn" => Ok(FeatureKind::Chroma),
            "lfs" | "bcnn" => Ok(FeatureKind::Lfs),
            "odf" | "rcnn" => Ok(FeatureKind::Odf),
            "mcqt" | "mcnn" => Ok(FeatureKind::Mcqt),
            other => Err(Error::invalid(format!("unknown feature kind `{other}`"))),
        }
    }
}

/// A nonnegative time × bin matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    pub values: Array2<f64>,
    pub frame_times: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(kind: FeatureKind, values: Array2<f64>, frame_times: Vec<f64>) -> Result<Self> {
        if values.ncols() != kind.bins() {
            return Err(Error::Shape(format!(
                "{kind} needs {} bins, got {}",
                kind.bins(),
                values.ncols()
            )));
        }
        if values.nrows() != frame_times.len() {
            return Err(Error::Shape(format!(
                "{} frames but {} frame times",
                values.nrows(),
                frame_times.len()
            )));
        }
        Ok(Self {
            kind,
            values,
            frame_times,
        })
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bins(&self) -> usize {
        self.values.ncols()
    }

    /// CSV with a `time,bin_0,...` header, six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time");
        for b in 0..self.bins() {
            out.push_str(&format!(",bin_{b}"));
        }
        out.push('\n');
        for (t, row) in self.frame_times.iter().zip(self.values.rows()) {
            out.push_str(&format!("{t:.6}"));
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Linear-interpolation quantile of unsorted data; `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty data");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Order statistic at rank `floor(q * (n - 1))` of unsorted data.
pub fn lower_quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty data");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).floor() as usize]
}

/// Replaces every value above the `q`-quantile of the flattened matrix by
/// that quantile. The quantile is the lower order statistic, so clipping
/// twice changes nothing.
pub fn decile_clip(values: &Array2<f64>, q: f64) -> Array2<f64> {
    assert!(!values.is_empty(), "cannot clip an empty matrix");
    let flat: Vec<f64> = values.iter().copied().collect();
    let level = lower_quantile(&flat, q);
    values.mapv(|v| v.min(level))
}

pub fn compute_lfs(spec: &SpectralFrameSeries) -> Result<FeatureMatrix> {
    let bins = FeatureKind::Lfs.bins();
    if spec.magnitudes.ncols() < bins {
        return Err(Error::Shape(format!(
            "LFS needs at least {bins} STFT bins, got {}",
            spec.magnitudes.ncols()
        )));
    }
    let low = spec.magnitudes.slice(ndarray::s![.., ..bins]).to_owned();
    let clipped = if low.is_empty() { low } else { decile_clip(&low, 0.9) };
    FeatureMatrix::new(FeatureKind::Lfs, clipped, spec.frame_times.clone())
}

/// All four features of a clip. Rates are reached by cascading
/// 44100 → 11025 → 5512.5 → 500 Hz, which keeps the long low-rate
/// anti-aliasing kernels cheap.
pub fn extract_all(clip: &AudioClip) -> Result<[FeatureMatrix; 4]> {
    let odf_cfg = StftConfig::odf();
    let base = resample(clip, odf_cfg.sample_rate);
    let mcqt_clip = resample(&base, StftConfig::mcqt().sample_rate);
    let chroma_clip = resample(&mcqt_clip, StftConfig::chroma().sample_rate);
    let lfs_clip = resample(&chroma_clip, StftConfig::lfs().sample_rate);

    let run = |kind: FeatureKind, c: &AudioClip| -> Result<FeatureMatrix> {
        kind.compute(&stft_magnitude(c, &kind.stft_config())?)
    };
    let ((chroma, lfs), (odf, mcqt)) = rayon::join(
        || {
            rayon::join(
                || run(FeatureKind::Chroma, &chroma_clip),
                || run(FeatureKind::Lfs, &lfs_clip),
            )
        },
        || {
            rayon::join(
                || run(FeatureKind::Odf, &base),
                || run(FeatureKind::Mcqt, &mcqt_clip),
            )
        },
    );
    Ok([chroma?, lfs?, odf?, mcqt?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn quantile_interpolates_linearly() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((quantile(&v, 0.9) - 9.1).abs() < 1e-12);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 10.0);
    }

    #[test]
    fn clip_constant_matrix_is_identity() {
        let m = Array2::from_elem((3, 4), 2.5);
        assert_eq!(decile_clip(&m, 0.9), m);
    }

    #[test]
    fn clip_one_to_ten() {
        let m = Array2::from_shape_vec((1, 10), (1..=10).map(f64::from).collect()).unwrap();
        let c = decile_clip(&m, 0.9);
        assert_eq!(c.iter().copied().fold(f64::MIN, f64::max), 9.0);
        let unchanged = m.iter().zip(c.iter()).filter(|(a, b)| a == b).count();
        assert_eq!(unchanged, 9);
    }

    #[test]
    fn clip_one_to_hundred_max_is_ninth_decile() {
        let m = Array2::from_shape_vec((10, 10), (1..=100).map(f64::from).collect()).unwrap();
        let c = decile_clip(&m, 0.9);
        let max = c.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(max, 90.0);
        assert_eq!(decile_clip(&c, 0.9), c);
    }

    #[test]
    fn feature_matrix_rejects_wrong_bin_count() {
        let err = FeatureMatrix::new(FeatureKind::Odf, array![[1.0, 2.0]], vec![0.0]);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn csv_has_time_plus_bin_columns() {
        let m = FeatureMatrix::new(FeatureKind::Odf, array![[0.0, 0.5, 1.0]], vec![0.25]).unwrap();
        assert_eq!(m.to_csv(), "time,bin_0,bin_1,bin_2\n0.250000,0.000000,0.500000,1.000000\n");
    }

    #[test]
    fn kinds_parse_from_network_names() {
        assert_eq!("hcnn".parse::<FeatureKind>().unwrap(), FeatureKind::Chroma);
        assert_eq!("MCQT".parse::<FeatureKind>().unwrap(), FeatureKind::Mcqt);
        assert!("tempo".parse::<FeatureKind>().is_err());
    }
}
