//! Tracks tatums on synthetic songs and reports rate and downbeat recall.
//!
//!     cargo run --example tatum_grid -- [n_songs] [seed]

use downbeat::features::FeatureKind;
use downbeat::synth::{corpus_recipes, generate_song, CorpusConfig};
use downbeat::tatum::track_tatums_or_fallback;

fn main() -> downbeat::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(5, |a| a.parse().expect("n_songs"));
    let seed: u64 = args.next().map_or(1, |a| a.parse().expect("seed"));
    let config = CorpusConfig { n_songs: n, seed, ..CorpusConfig::default() };
    for recipe in corpus_recipes(&config) {
        let (clip, ann) = generate_song(&recipe)?;
        let odf = FeatureKind::Odf.extract(&clip)?;
        let grid = track_tatums_or_fallback(&odf, clip.duration())?;
        let per_beat = recipe.beat_period() / grid.median_interval().unwrap_or(f64::NAN);
        let hit = ann
            .downbeat_times
            .iter()
            .filter(|&&d| grid.tatum_times.iter().any(|&t| (t - d).abs() <= 0.07))
            .count();
        println!(
            "tempo {:6.1} meter {}  tatums {:4}  tatums/beat {:.2}  downbeat recall {:5.1}%",
            recipe.tempo,
            recipe.beats_per_bar,
            grid.len(),
            per_beat,
            100.0 * hit as f64 / ann.downbeat_times.len() as f64
        );
    }
    Ok(())
}
