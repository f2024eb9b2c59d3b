//! Labelled synthetic songs: kick on downbeats, noise on every tatum, a
//! triad per bar and a per-beat melody.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::annotations::AnnotationSet;
use crate::audio::{write_wav, AudioClip};
use crate::error::{Error, Result};
use crate::manifest::Manifest;

pub const SYNTH_SAMPLE_RATE: f64 = 44100.0;
pub const TATUMS_PER_BEAT: usize = 2;
pub const MANIFEST_FILE: &str = "manifest.txt";
const NOISE_FLOOR: f64 = 0.003;

#[derive(Debug, Clone, PartialEq)]
pub struct SongRecipe {
    pub tempo: f64,
    pub beats_per_bar: usize,
    pub duration: f64,
    pub chord_period_bars: usize,
    /// Gain of the noise burst at each tatum of the bar.
    pub accents: Vec<f64>,
    /// Random per-beat timing deviation of up to 1% of a beat.
    pub jitter: bool,
    pub seed: u64,
}

impl SongRecipe {
    pub fn new(tempo: f64, beats_per_bar: usize, duration: f64, seed: u64) -> Self {
        Self {
            tempo,
            beats_per_bar,
            duration,
            chord_period_bars: 1,
            accents: default_accents(beats_per_bar),
            jitter: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(60.0..=200.0).contains(&self.tempo) {
            return Err(Error::invalid(format!("tempo {} outside [60, 200] BPM", self.tempo)));
        }
        if !(2..=4).contains(&self.beats_per_bar) {
            return Err(Error::invalid(format!("meter {} not in {{2, 3, 4}}", self.beats_per_bar)));
        }
        if !(self.duration >= 20.0) {
            return Err(Error::invalid(format!("duration {} s is below 20 s", self.duration)));
        }
        if self.chord_period_bars == 0 {
            return Err(Error::invalid("chord period must be at least one bar"));
        }
        if self.accents.len() != self.beats_per_bar * TATUMS_PER_BEAT {
            return Err(Error::invalid(format!(
                "{} accents for {} tatums per bar",
                self.accents.len(),
                self.beats_per_bar * TATUMS_PER_BEAT
            )));
        }
        Ok(())
    }

    pub fn beat_period(&self) -> f64 {
        60.0 / self.tempo
    }

    pub fn bar_period(&self) -> f64 {
        self.beat_period() * self.beats_per_bar as f64
    }
}

/// Strong first tatum, medium on-beat tatums, weaker off-beats.
pub fn default_accents(beats_per_bar: usize) -> Vec<f64> {
    (0..beats_per_bar * TATUMS_PER_BEAT)
        .map(|j| match j {
            0 => 1.0,
            j if j % TATUMS_PER_BEAT == 0 => 0.9,
            _ => 0.8,
        })
        .collect()
}

pub fn generate_song(recipe: &SongRecipe) -> Result<(AudioClip, AnnotationSet)> {
    recipe.validate()?;
    let sr = SYNTH_SAMPLE_RATE;
    let len = (recipe.duration * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let beat = recipe.beat_period();
    let offset = rng.gen::<f64>() * recipe.bar_period();

    // Beat onsets as sample indices.
    let mut beat_samples: Vec<usize> = Vec::new();
    let mut k = 0usize;
    loop {
        let mut t = offset + k as f64 * beat;
        if recipe.jitter && k > 0 {
            t += (rng.gen::<f64>() * 2.0 - 1.0) * 0.01 * beat;
        }
        let s = (t * sr).round() as usize;
        if s >= len {
            break;
        }
        beat_samples.push(s);
        k += 1;
    }

    // A faint noise floor, as in any recording.
    let mut x: Vec<f64> = (0..len).map(|_| NOISE_FLOOR * (rng.gen::<f64>() * 2.0 - 1.0)).collect();
    let bpb = recipe.beats_per_bar;
    let tatum_samples = |b: usize| -> [usize; TATUMS_PER_BEAT] {
        let start = beat_samples[b];
        let end = beat_samples
            .get(b + 1)
            .copied()
            .unwrap_or_else(|| start + (beat * sr).round() as usize);
        [start, start + (end - start) / 2]
    };

    // Noise on every tatum.
    for b in 0..beat_samples.len() {
        for (j, &s) in tatum_samples(b).iter().enumerate() {
            let gain = recipe.accents[(b % bpb) * TATUMS_PER_BEAT + j];
            add_noise_burst(&mut x, s, 0.5 * gain, &mut rng);
        }
    }

    // Kick on downbeats.
    for b in (0..beat_samples.len()).step_by(bpb) {
        add_kick(&mut x, beat_samples[b], 0.9);
    }

    // Triads, one per chord period, changing root each time.
    let mut root = rng.gen_range(0..12);
    let bar_starts: Vec<usize> = (0..beat_samples.len()).step_by(bpb).map(|b| beat_samples[b]).collect();
    let mut chords: Vec<[i32; 3]> = Vec::new();
    for (i, chunk) in bar_starts.chunks(recipe.chord_period_bars).enumerate() {
        if i > 0 {
            root = (root + rng.gen_range(1..12)) % 12;
        }
        let third = if rng.gen_bool(0.5) { 4 } else { 3 };
        let chord = [root, root + third, root + 7];
        let start = chunk[0];
        let next = bar_starts
            .get((i + 1) * recipe.chord_period_bars)
            .copied()
            .unwrap_or(len);
        for &n in &chord {
            add_tone(&mut x, start, next, midi_to_hz(48 + n), 0.06, 0.01, None);
        }
        for _ in chunk {
            chords.push(chord);
        }
    }

    // Melody, one chord tone per beat, louder on the downbeat.
    for b in 0..beat_samples.len() {
        let chord = chords[(b / bpb).min(chords.len() - 1)];
        let note = chord[rng.gen_range(0..3)] + if rng.gen_bool(0.5) { 60 } else { 72 };
        let amp = if b % bpb == 0 { 0.2 } else { 0.12 };
        let start = beat_samples[b];
        let end = (start + (0.9 * beat * sr) as usize).min(len);
        add_tone(&mut x, start, end, midi_to_hz(note), amp, 0.005, Some(0.25));
    }

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= 0.9 / peak);
    }

    let beats: Vec<f64> = beat_samples.iter().map(|&s| s as f64 / sr).collect();
    let downbeats: Vec<f64> = beats.iter().step_by(bpb).copied().collect();
    let clip = AudioClip::new(x, sr)?;
    let ann = AnnotationSet::new(downbeats, Some(beats), "synthetic")?;
    Ok((clip, ann))
}

fn midi_to_hz(note: i32) -> f64 {
    440.0 * 2f64.powf((note - 69) as f64 / 12.0)
}

fn add_noise_burst(x: &mut [f64], start: usize, amp: f64, rng: &mut ChaCha8Rng) {
    let n = (0.12 * SYNTH_SAMPLE_RATE) as usize;
    for i in 0..n {
        let white = rng.gen::<f64>() * 2.0 - 1.0;
        let Some(slot) = x.get_mut(start + i) else { break };
        let t = i as f64 / SYNTH_SAMPLE_RATE;
        *slot += amp * white * (1.0 - (-t / 0.006).exp()) * (-t / 0.03).exp();
    }
}

fn add_kick(x: &mut [f64], start: usize, amp: f64) {
    let n = (0.25 * SYNTH_SAMPLE_RATE) as usize;
    let mut phase = 0.0f64;
    for i in 0..n {
        let Some(slot) = x.get_mut(start + i) else { break };
        let t = i as f64 / SYNTH_SAMPLE_RATE;
        let f = 50.0 + 90.0 * (-t / 0.03).exp();
        *slot += amp * phase.sin() * (-t / 0.08).exp();
        phase += 2.0 * PI * f / SYNTH_SAMPLE_RATE;
    }
}

/// Sine plus a half-amplitude second harmonic over `[start, end)`, with a
/// linear attack, an optional exponential decay and a 10 ms release.
fn add_tone(x: &mut [f64], start: usize, end: usize, freq: f64, amp: f64, attack: f64, decay: Option<f64>) {
    let end = end.min(x.len());
    if end <= start {
        return;
    }
    let sr = SYNTH_SAMPLE_RATE;
    let release = (0.01 * sr) as usize;
    let w = 2.0 * PI * freq / sr;
    for i in 0..end - start {
        let t = i as f64 / sr;
        let mut env = (t / attack).min(1.0);
        if let Some(tau) = decay {
            env *= (-t / tau).exp();
        }
        let left = end - start - i;
        if left < release {
            env *= left as f64 / release as f64;
        }
        let p = w * i as f64;
        x[start + i] += amp * env * (p.sin() + 0.5 * (2.0 * p).sin());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub n_songs: usize,
    /// Fraction of songs in 4/4; the rest are in 3/4.
    pub duple_share: f64,
    pub tempo_range: (f64, f64),
    pub duration: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_songs: 10,
            duple_share: 0.7,
            tempo_range: (80.0, 160.0),
            duration: 30.0,
            seed: 0,
        }
    }
}

pub fn stem_name(i: usize) -> String {
    format!("song_{i:04}")
}

/// Recipes of a corpus, drawn from one generator seeded by `config.seed`.
pub fn corpus_recipes(config: &CorpusConfig) -> Vec<SongRecipe> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.n_songs)
        .map(|_| {
            let meter = if rng.gen_bool(config.duple_share.clamp(0.0, 1.0)) { 4 } else { 3 };
            let (lo, hi) = config.tempo_range;
            let tempo = lo + rng.gen::<f64>() * (hi - lo);
            SongRecipe::new(tempo, meter, config.duration, rng.gen())
        })
        .collect()
}

/// Writes `<stem>.wav`, `<stem>.beats` and a manifest into `dir`.
pub fn generate_corpus(dir: &Path, config: &CorpusConfig) -> Result<Vec<PathBuf>> {
    if config.n_songs == 0 {
        return Err(Error::invalid("corpus needs at least one song"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let recipes = corpus_recipes(config);
    for r in &recipes {
        r.validate()?;
    }
    let written = recipes
        .par_iter()
        .enumerate()
        .map(|(i, recipe)| {
            let stem = stem_name(i);
            let (clip, ann) = generate_song(recipe)?;
            let wav = dir.join(format!("{stem}.wav"));
            write_wav(&wav, &clip)?;
            ann.write(&dir.join(format!("{stem}.beats")))?;
            Ok(wav)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut manifest = Manifest::new();
    manifest
        .set("seed", config.seed)
        .set("songs", config.n_songs)
        .set("duple_share", config.duple_share)
        .set("tempo_min", config.tempo_range.0)
        .set("tempo_max", config.tempo_range.1)
        .set("duration", config.duration);
    for (i, r) in recipes.iter().enumerate() {
        manifest.set(
            stem_name(i),
            format!("{:.6},{},{},{}", r.tempo, r.beats_per_bar, r.duration, r.seed),
        );
    }
    manifest.write(&dir.join(MANIFEST_FILE))?;
    Ok(written)
}
