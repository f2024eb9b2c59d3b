//! Tatum segmentation: tempogram, periodicity path, pulse curve and peaks.

mod path;
mod plp;
mod tempogram;

pub use path::{best_path_dp, jump_weight, path_score, PeriodicityPath, JUMP_WEIGHTS};
pub use plp::build_plp;
pub use tempogram::{
    compute_tempogram, frame_rate_of, novelty_curve, tempogram_from_novelty, Tempogram, MAX_TEMPO,
    MIN_TEMPO, TEMPOGRAM_WINDOW_SECONDS,
};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Peaks below this fraction of the curve maximum are ignored.
pub const PEAK_THRESHOLD: f64 = 0.1;
/// Peaks closer than one period of the fastest tempo are merged.
pub const MIN_TATUM_GAP: f64 = 60.0 / MAX_TEMPO;
/// Spacing of the grid used when no pulse can be found.
pub const FALLBACK_SPACING: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct TatumGrid {
    pub tatum_times: Vec<f64>,
    /// Pulse curve at `plp_times`; empty for grids not derived from audio.
    pub plp: Vec<f64>,
    pub plp_times: Vec<f64>,
}

impl TatumGrid {
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        check_increasing(&times)?;
        Ok(Self {
            tatum_times: times,
            plp: Vec::new(),
            plp_times: Vec::new(),
        })
    }

    /// Evenly spaced tatums from `0` up to `duration`.
    pub fn uniform(duration: f64, spacing: f64) -> Self {
        let n = (duration / spacing).floor().max(0.0) as usize + 1;
        Self {
            tatum_times: (0..n).map(|i| i as f64 * spacing).collect(),
            plp: Vec::new(),
            plp_times: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tatum_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tatum_times.is_empty()
    }

    pub fn median_interval(&self) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let mut d: Vec<f64> = self.tatum_times.windows(2).map(|w| w[1] - w[0]).collect();
        d.sort_by(f64::total_cmp);
        let n = d.len();
        Some(if n % 2 == 1 {
            d[n / 2]
        } else {
            0.5 * (d[n / 2 - 1] + d[n / 2])
        })
    }

    /// Index of the tatum nearest to `time`; the earlier one on ties.
    pub fn nearest(&self, time: f64) -> Option<usize> {
        let i = self.tatum_times.partition_point(|&t| t < time);
        match (i.checked_sub(1), self.tatum_times.get(i)) {
            (None, None) => None,
            (None, Some(_)) => Some(i),
            (Some(j), None) => Some(j),
            (Some(j), Some(&after)) => {
                if after - time < time - self.tatum_times[j] {
                    Some(i)
                } else {
                    Some(j)
                }
            }
        }
    }
}

fn check_increasing(times: &[f64]) -> Result<()> {
    if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(format!(
            "tatum times must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("tatum times must be finite"));
    }
    Ok(())
}

/// Local maxima of `curve` above `PEAK_THRESHOLD` times its maximum. Peaks
/// closer than `MIN_TATUM_GAP` are merged, keeping the larger (the earlier
/// on equal height). A plateau counts once, at its first sample.
pub fn pick_tatums(plp: &[f64], times: &[f64]) -> Result<TatumGrid> {
    if plp.len() != times.len() {
        return Err(Error::Shape(format!(
            "{} pulse values for {} frame times",
            plp.len(),
            times.len()
        )));
    }
    let max = plp.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::Segmentation("pulse curve has no positive values".into()));
    }
    let floor = PEAK_THRESHOLD * max;
    let mut kept: Vec<usize> = Vec::new();
    for i in 1..plp.len().saturating_sub(1) {
        let v = plp[i];
        if v < floor || !(v > plp[i - 1]) || v < plp[i + 1] {
            continue;
        }
        // skip the tail of a plateau
        if v == plp[i + 1] {
            let mut j = i + 1;
            while j + 1 < plp.len() && plp[j] == v {
                j += 1;
            }
            if plp[j] > v {
                continue;
            }
        }
        match kept.last() {
            Some(&last) if times[i] - times[last] < MIN_TATUM_GAP => {
                if v > plp[last] {
                    *kept.last_mut().unwrap() = i;
                }
            }
            _ => kept.push(i),
        }
    }
    if kept.is_empty() {
        return Err(Error::Segmentation("no peaks in pulse curve".into()));
    }
    Ok(TatumGrid {
        tatum_times: kept.iter().map(|&i| times[i]).collect(),
        plp: plp.to_vec(),
        plp_times: times.to_vec(),
    })
}

/// Full tracker: tempogram, DP path, pulse curve, peaks.
pub fn track_tatums(odf: &FeatureMatrix) -> Result<TatumGrid> {
    let tg = compute_tempogram(odf)?;
    let path = best_path_dp(&tg);
    let plp = build_plp(&tg, &path);
    pick_tatums(&plp, &tg.frame_times)
}

/// [`track_tatums`], falling back to a uniform grid over `duration` when the
/// pulse has no peaks or the clip is too short for the tempogram.
pub fn track_tatums_or_fallback(odf: &FeatureMatrix, duration: f64) -> Result<TatumGrid> {
    match track_tatums(odf) {
        Ok(grid) if grid.len() >= 2 => Ok(grid),
        Ok(_) | Err(Error::Segmentation(_)) | Err(Error::InputTooShort { .. }) => {
            log::warn!(
                "tatum segmentation failed; using a uniform {FALLBACK_SPACING} s grid"
            );
            Ok(TatumGrid::uniform(duration, FALLBACK_SPACING))
        }
        Err(e) => Err(e),
    }
}

/// Replaces the tatums by annotated beats with `factor - 1` evenly spaced
/// insertions per beat interval.
pub fn substitute_annotated_grid(grid: &TatumGrid, beats: &[f64], factor: usize) -> Result<TatumGrid> {
    if beats.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 annotated beats, got {}",
            beats.len()
        )));
    }
    if factor == 0 {
        return Err(Error::invalid("interpolation factor must be at least 1"));
    }
    check_increasing(beats)?;
    let mut times = Vec::with_capacity((beats.len() - 1) * factor + 1);
    for w in beats.windows(2) {
        for j in 0..factor {
            times.push(w[0] + (w[1] - w[0]) * j as f64 / factor as f64);
        }
    }
    times.push(beats[beats.len() - 1]);
    Ok(TatumGrid {
        tatum_times: times,
        plp: grid.plp.clone(),
        plp_times: grid.plp_times.clone(),
    })
}

/// Moves the tatum nearest to each annotated downbeat onto it. Tatums that
/// would break strict ordering are dropped.
pub fn snap_downbeats(grid: &TatumGrid, downbeats: &[f64]) -> Result<TatumGrid> {
    if grid.is_empty() {
        return Err(Error::invalid("cannot snap downbeats onto an empty grid"));
    }
    let mut times = grid.tatum_times.clone();
    for &d in downbeats {
        let i = grid.nearest(d).expect("grid is nonempty");
        times[i] = d;
    }
    let mut out: Vec<f64> = Vec::with_capacity(times.len());
    for t in times {
        if out.last().map_or(true, |&last| t > last) {
            out.push(t);
        }
    }
    Ok(TatumGrid {
        tatum_times: out,
        plp: grid.plp.clone(),
        plp_times: grid.plp_times.clone(),
    })
}
