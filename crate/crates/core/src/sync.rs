//! Tatum-synchronous features and fixed-length network inputs.

use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::nn::{Target, Tensor3};
use crate::tatum::TatumGrid;

pub const SUBDIVISIONS: usize = 5;
/// Annotated downbeats further than this from every tatum are not labelled.
pub const DOWNBEAT_TOLERANCE: f64 = 0.07;

/// Window length in tatums for each feature's network.
pub fn window_tatums(kind: FeatureKind) -> usize {
    match kind {
        FeatureKind::Chroma => 9,
        _ => 17,
    }
}

/// Feature values sampled `SUBDIVISIONS` times per tatum.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncFeature {
    pub kind: FeatureKind,
    /// `(SUBDIVISIONS * tatums) × bins`.
    pub values: Array2<f64>,
    pub tatums: usize,
}

impl SyncFeature {
    /// Rows belonging to tatum `i`.
    pub fn tatum_rows(&self, i: usize) -> std::ops::Range<usize> {
        i * SUBDIVISIONS..(i + 1) * SUBDIVISIONS
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInput {
    pub window: Tensor3,
    pub center_tatum: usize,
    /// Tatum index feeding each block of the window (reflected at the edges).
    pub covered_tatums: Vec<usize>,
    pub label: Option<Target>,
}

/// Instants at which the grid is sampled. The last tatum reuses the
/// previous interval.
pub fn subdivision_times(grid: &TatumGrid) -> Result<Vec<f64>> {
    let t = &grid.tatum_times;
    if t.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 tatums to subdivide, got {}",
            t.len()
        )));
    }
    let mut out = Vec::with_capacity(t.len() * SUBDIVISIONS);
    for i in 0..t.len() {
        let span = if i + 1 < t.len() { t[i + 1] - t[i] } else { t[i] - t[i - 1] };
        for s in 0..SUBDIVISIONS {
            out.push(t[i] + span * s as f64 / SUBDIVISIONS as f64);
        }
    }
    Ok(out)
}

/// Linear interpolation of each bin at the subdivision instants, clamped to
/// the first and last frame outside the feature's span.
pub fn quantize_to_grid(feat: &FeatureMatrix, grid: &TatumGrid) -> Result<SyncFeature> {
    let times = subdivision_times(grid)?;
    let ft = &feat.frame_times;
    let (Some(&f0), Some(&f1)) = (ft.first(), ft.last()) else {
        return Err(Error::invalid("feature has no frames"));
    };
    let g0 = grid.tatum_times[0];
    let g1 = *grid.tatum_times.last().expect("nonempty");
    if g1 < f0 || g0 > f1 {
        return Err(Error::invalid(format!(
            "grid [{g0:.3}, {g1:.3}] s does not overlap features [{f0:.3}, {f1:.3}] s"
        )));
    }
    let bins = feat.bins();
    let mut values = Array2::zeros((times.len(), bins));
    for (r, &t) in times.iter().enumerate() {
        let i = ft.partition_point(|&x| x <= t);
        let (a, b, w) = if i == 0 {
            (0, 0, 0.0)
        } else if i >= ft.len() {
            (ft.len() - 1, ft.len() - 1, 0.0)
        } else {
            (i - 1, i, (t - ft[i - 1]) / (ft[i] - ft[i - 1]))
        };
        for c in 0..bins {
            let va = feat.values[[a, c]];
            let vb = feat.values[[b, c]];
            values[[r, c]] = va + w * (vb - va);
        }
    }
    Ok(SyncFeature {
        kind: feat.kind,
        values,
        tatums: grid.len(),
    })
}

/// Reflects a tatum index into `0..n` without repeating the edge tatum.
pub fn reflect_index(idx: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let r = idx.rem_euclid(period);
    if r >= n as isize {
        (period - r) as usize
    } else {
        r as usize
    }
}

/// Min-max scales in place; a constant slice becomes zeros.
pub fn minmax_scale(values: &mut [f64]) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    for v in values.iter_mut() {
        *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
    }
}

/// One window per tatum, centred on it, `window_tatums` tatums long.
pub fn make_inputs(sf: &SyncFeature, window_tatums: usize) -> Result<Vec<NetworkInput>> {
    if window_tatums == 0 || window_tatums % 2 == 0 {
        return Err(Error::invalid(format!("window length {window_tatums} must be odd")));
    }
    if sf.tatums < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 tatums to build windows, got {}",
            sf.tatums
        )));
    }
    (0..sf.tatums).map(|c| make_window(sf, c, window_tatums)).collect()
}

/// The window centred on tatum `center`.
pub fn make_window(sf: &SyncFeature, center: usize, window_tatums: usize) -> Result<NetworkInput> {
    let bins = sf.values.ncols();
    let rows = window_tatums * SUBDIVISIONS;
    let covered = covered_tatums(center, window_tatums, sf.tatums);
    let mut data = Vec::with_capacity(rows * bins);
    for &tatum in &covered {
        for r in sf.tatum_rows(tatum) {
            data.extend(sf.values.row(r).iter());
        }
    }
    minmax_scale(&mut data);
    Ok(NetworkInput {
        window: Tensor3::from_vec([rows, bins, 1], data)?,
        center_tatum: center,
        covered_tatums: covered,
        label: None,
    })
}

/// Reflected tatum indices covered by the window centred on `center`.
pub fn covered_tatums(center: usize, window_tatums: usize, tatums: usize) -> Vec<usize> {
    let half = (window_tatums / 2) as isize;
    (-half..=half)
        .map(|o| reflect_index(center as isize + o, tatums))
        .collect()
}

/// Multi-label target over the covered tatums.
pub fn multi_label(covered: &[usize], downbeat_tatums: &BTreeSet<usize>) -> Vec<f64> {
    covered
        .iter()
        .map(|t| if downbeat_tatums.contains(t) { 1.0 } else { 0.0 })
        .collect()
}

/// Indices of the tatums nearest to each downbeat, within `DOWNBEAT_TOLERANCE`.
pub fn downbeat_tatums(grid: &TatumGrid, downbeats: &[f64]) -> BTreeSet<usize> {
    downbeats
        .iter()
        .filter_map(|&d| {
            let i = grid.nearest(d)?;
            ((grid.tatum_times[i] - d).abs() <= DOWNBEAT_TOLERANCE).then_some(i)
        })
        .collect()
}

/// Multi-label: a 0/1 vector over the covered tatums. Otherwise class 1 when
/// the centre tatum is a downbeat.
pub fn label_windows(inputs: &mut [NetworkInput], downbeat_tatums: &BTreeSet<usize>, multi: bool) {
    for input in inputs {
        input.label = Some(if multi {
            Target::Vector(multi_label(&input.covered_tatums, downbeat_tatums))
        } else {
            Target::Class(usize::from(downbeat_tatums.contains(&input.center_tatum)))
        });
    }
}
