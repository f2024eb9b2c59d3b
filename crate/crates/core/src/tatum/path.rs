use super::Tempogram;

/// Transition weights for a tempo-bin jump of 0, ±1 and ±2.
pub const JUMP_WEIGHTS: [f64; 3] = [1.0, 0.7, 0.5];

/// Decoded tempo-bin per tempogram frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicityPath {
    pub bins: Vec<usize>,
    pub tempi: Vec<f64>,
}

pub fn jump_weight(from: usize, to: usize) -> Option<f64> {
    JUMP_WEIGHTS.get(from.abs_diff(to)).copied()
}

/// Score of a bin sequence: first frame at full weight, then each frame's
/// magnitude weighted by the jump that reached it.
pub fn path_score(magnitudes: &ndarray::Array2<f64>, bins: &[usize]) -> Option<f64> {
    let mut score = magnitudes[[0, bins[0]]];
    for t in 1..bins.len() {
        score += jump_weight(bins[t - 1], bins[t])? * magnitudes[[t, bins[t]]];
    }
    Some(score)
}

/// Maximises [`path_score`] over paths whose bin changes by at most two per
/// frame. At the tempo-axis edges the neighbourhood is truncated. Ties go to
/// the smaller bin, both for the final frame and for each predecessor.
pub fn best_path_dp(tg: &Tempogram) -> PeriodicityPath {
    let frames = tg.frames();
    let bins = tg.bins();
    assert!(frames > 0 && bins > 0, "empty tempogram");
    let mags = &tg.magnitudes;

    let mut score: Vec<f64> = mags.row(0).to_vec();
    let mut next = vec![0.0; bins];
    let mut back = vec![0u32; frames * bins];
    for t in 1..frames {
        for b in 0..bins {
            let lo = b.saturating_sub(2);
            let hi = (b + 2).min(bins - 1);
            let mut best = f64::NEG_INFINITY;
            let mut arg = lo;
            for p in lo..=hi {
                let s = score[p] + JUMP_WEIGHTS[p.abs_diff(b)] * mags[[t, b]];
                if s > best {
                    best = s;
                    arg = p;
                }
            }
            next[b] = best;
            back[t * bins + b] = arg as u32;
        }
        std::mem::swap(&mut score, &mut next);
    }

    let mut b = (0..bins).fold(0, |best, i| if score[i] > score[best] { i } else { best });
    let mut path = vec![0usize; frames];
    for t in (0..frames).rev() {
        path[t] = b;
        if t > 0 {
            b = back[t * bins + b] as usize;
        }
    }
    PeriodicityPath {
        tempi: path.iter().map(|&i| tg.tempo_axis[i]).collect(),
        bins: path,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn tempogram(mags: Array2<f64>) -> Tempogram {
        let (frames, bins) = mags.dim();
        Tempogram {
            phases: Array2::zeros((frames, bins)),
            magnitudes: mags,
            tempo_axis: (0..bins).map(|b| 60.0 + b as f64).collect(),
            frame_times: (0..frames).map(|t| t as f64).collect(),
            frame_rate: 1.0,
            half_window: 1,
        }
    }

    #[test]
    fn single_dominant_bin_gives_constant_path() {
        let mut m = Array2::from_elem((8, 6), 0.1);
        m.column_mut(4).fill(2.0);
        let path = best_path_dp(&tempogram(m));
        assert_eq!(path.bins, vec![4; 8]);
        assert_eq!(path.tempi, vec![64.0; 8]);
    }

    #[test]
    fn equal_ridges_resolve_to_lower_bin() {
        let mut m = Array2::zeros((6, 10));
        m.column_mut(2).fill(1.0);
        m.column_mut(7).fill(1.0);
        assert_eq!(best_path_dp(&tempogram(m)).bins, vec![2; 6]);
    }

    #[test]
    fn jumps_wider_than_two_bins_are_not_allowed() {
        assert_eq!(jump_weight(3, 5), Some(0.5));
        assert_eq!(jump_weight(3, 6), None);
    }
}
