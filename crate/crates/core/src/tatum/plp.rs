use super::{PeriodicityPath, Tempogram};

/// Predominant local pulse.
///
/// Every frame contributes a Hann-windowed cosine at its decoded tempo and
/// phase, overlap-added and half-wave rectified. Frames whose decoded
/// magnitude is zero carry no phase and contribute nothing.
pub fn build_plp(tg: &Tempogram, path: &PeriodicityPath) -> Vec<f64> {
    let frames = tg.frames();
    assert_eq!(path.bins.len(), frames, "path length must match the tempogram");
    let half = tg.half_window as isize;
    let mut curve = vec![0.0; frames];
    for t in 0..frames {
        let b = path.bins[t];
        if tg.magnitudes[[t, b]] <= 0.0 {
            continue;
        }
        let theta = 2.0 * std::f64::consts::PI * tg.tempo_axis[b] / 60.0 / tg.frame_rate;
        let phi = tg.phases[[t, b]];
        let lo = (t as isize - half).max(0);
        let hi = (t as isize + half).min(frames as isize - 1);
        for m in lo..=hi {
            curve[m as usize] +=
                tg.window_weight(m - t as isize) * (theta * m as f64 - phi).cos();
        }
    }
    curve.iter_mut().for_each(|v| *v = v.max(0.0));
    curve
}
