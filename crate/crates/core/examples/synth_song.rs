//! Renders one synthetic song and writes it with its annotations.
//!
//!     cargo run --example synth_song -- [tempo] [beats_per_bar] [out_dir]

use std::path::PathBuf;

use downbeat::audio::write_wav;
use downbeat::synth::{generate_song, SongRecipe};

fn main() -> downbeat::Result<()> {
    let mut args = std::env::args().skip(1);
    let tempo: f64 = args.next().map_or(120.0, |a| a.parse().expect("tempo"));
    let meter: usize = args.next().map_or(4, |a| a.parse().expect("beats_per_bar"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synth_out".into()));

    let recipe = SongRecipe::new(tempo, meter, 30.0, 7);
    let (clip, ann) = generate_song(&recipe)?;
    std::fs::create_dir_all(&out).expect("create output directory");
    write_wav(&out.join("song.wav"), &clip)?;
    ann.write(&out.join("song.beats"))?;

    println!("{:.1} s at {} Hz, bar period {:.3} s", clip.duration(), clip.sample_rate, recipe.bar_period());
    println!("{} downbeats, first at {:.6} s", ann.downbeat_times.len(), ann.downbeat_times[0]);
    println!("wrote {}", out.display());
    Ok(())
}
