//! Extracts the four features of a synthetic song and summarises them.
//!
//!     cargo run --example features

use downbeat::features::extract_all;
use downbeat::synth::{generate_song, SongRecipe};

fn main() -> downbeat::Result<()> {
    let (clip, _) = generate_song(&SongRecipe::new(100.0, 3, 20.0, 3))?;
    for f in extract_all(&clip)? {
        let frames = f.frames();
        let rate = (frames - 1) as f64 / (f.frame_times[frames - 1] - f.frame_times[0]);
        let zeros = f.values.iter().filter(|&&v| v == 0.0).count() as f64 / f.values.len() as f64;
        let max = f.values.iter().copied().fold(0.0, f64::max);
        println!(
            "{:6}  {:4} frames  {:7.2} frames/s  {:3} bins  max {:9.4}  zeros {:5.1}%",
            f.kind.to_string(),
            frames,
            rate,
            f.bins(),
            max,
            100.0 * zeros
        );
    }
    Ok(())
}
