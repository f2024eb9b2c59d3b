//! Downbeat scoring, tatum recall and dataset bookkeeping.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tatum::TatumGrid;

pub const TOLERANCE: f64 = 0.07;
/// Events before this time are ignored.
pub const SKIP_START: f64 = 5.0;
/// Events in the last this-many seconds are ignored.
pub const SKIP_END: f64 = 3.0;
pub const AUDIO_EXT: &str = "wav";
pub const ANNOTATION_EXT: &str = "beats";

/// Drops events in `[0, 5)` and `(duration - 3, duration]`.
pub fn exclude_edges(times: &[f64], duration: f64) -> Vec<f64> {
    times
        .iter()
        .copied()
        .filter(|&t| t >= SKIP_START && t <= duration - SKIP_END)
        .collect()
}

/// Greedy earliest-first one-to-one matching of two sorted lists.
pub fn count_matches(est: &[f64], ann: &[f64], tolerance: f64) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < est.len() && j < ann.len() {
        if est[i] < ann[j] - tolerance {
            i += 1;
        } else if est[i] > ann[j] + tolerance {
            j += 1;
        } else {
            n += 1;
            i += 1;
            j += 1;
        }
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub matches: usize,
    pub estimated: usize,
    pub annotated: usize,
}

impl Score {
    fn from_counts(matches: usize, estimated: usize, annotated: usize) -> Self {
        if estimated == 0 && annotated == 0 {
            return Self {
                precision: 100.0,
                recall: 100.0,
                f_measure: 100.0,
                matches,
                estimated,
                annotated,
            };
        }
        let p = if estimated > 0 { matches as f64 / estimated as f64 } else { 0.0 };
        let r = if annotated > 0 { matches as f64 / annotated as f64 } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        Self {
            precision: 100.0 * p,
            recall: 100.0 * r,
            f_measure: 100.0 * f,
            matches,
            estimated,
            annotated,
        }
    }
}

/// Precision, recall and F (percent) with ±70 ms tolerance after edge exclusion.
pub fn f_measure(estimated: &[f64], annotated: &[f64], duration: f64) -> Score {
    let mut est = exclude_edges(estimated, duration);
    let mut ann = exclude_edges(annotated, duration);
    est.sort_by(f64::total_cmp);
    ann.sort_by(f64::total_cmp);
    Score::from_counts(count_matches(&est, &ann, TOLERANCE), est.len(), ann.len())
}

/// Percentage of edge-excluded annotated downbeats with a tatum within ±70 ms.
pub fn tatum_recall(grid: &TatumGrid, annotated: &[f64], duration: f64) -> f64 {
    let ann = exclude_edges(annotated, duration);
    if ann.is_empty() {
        return if grid.is_empty() { 0.0 } else { 100.0 };
    }
    let hit = ann
        .iter()
        .filter(|&&d| {
            grid.nearest(d)
                .is_some_and(|i| (grid.tatum_times[i] - d).abs() <= TOLERANCE)
        })
        .count();
    100.0 * hit as f64 / ann.len() as f64
}

/// The estimate, every other event dropped (both phases), and midpoints inserted.
pub fn metrical_variants(est: &[f64]) -> Vec<Vec<f64>> {
    let even: Vec<f64> = est.iter().copied().step_by(2).collect();
    let odd: Vec<f64> = est.iter().copied().skip(1).step_by(2).collect();
    let mut doubled = Vec::with_capacity(est.len() * 2);
    for (i, &t) in est.iter().enumerate() {
        doubled.push(t);
        if let Some(&next) = est.get(i + 1) {
            doubled.push(0.5 * (t + next));
        }
    }
    vec![est.to_vec(), even, odd, doubled]
}

/// Best F over the bar-rate interpretations of the estimate.
pub fn f_measure_metrical_variants(estimated: &[f64], annotated: &[f64], duration: f64) -> Score {
    metrical_variants(estimated)
        .iter()
        .map(|v| f_measure(v, annotated, duration))
        .fold(None, |best: Option<Score>, s| match best {
            Some(b) if b.f_measure >= s.f_measure => Some(b),
            _ => Some(s),
        })
        .expect("at least the identity variant")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SongScore {
    pub dataset: String,
    pub stem: String,
    #[serde(flatten)]
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub dataset: String,
    pub songs: usize,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f_measure: f64,
    pub std_f_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub mode: String,
    pub songs: Vec<SongScore>,
    pub datasets: Vec<DatasetSummary>,
}

impl ScoreReport {
    pub fn new(mode: impl Into<String>, songs: Vec<SongScore>) -> Self {
        let mut groups: BTreeMap<&str, Vec<&Score>> = BTreeMap::new();
        for s in &songs {
            groups.entry(s.dataset.as_str()).or_default().push(&s.score);
        }
        let datasets = groups
            .into_iter()
            .map(|(name, scores)| {
                let n = scores.len() as f64;
                let mean = |f: fn(&Score) -> f64| scores.iter().map(|s| f(s)).sum::<f64>() / n;
                let mean_f = mean(|s| s.f_measure);
                let var = scores.iter().map(|s| (s.f_measure - mean_f).powi(2)).sum::<f64>() / n;
                DatasetSummary {
                    dataset: name.to_string(),
                    songs: scores.len(),
                    mean_precision: mean(|s| s.precision),
                    mean_recall: mean(|s| s.recall),
                    mean_f_measure: mean_f,
                    std_f_measure: var.sqrt(),
                }
            })
            .collect();
        Self {
            mode: mode.into(),
            songs,
            datasets,
        }
    }

    pub fn mean_f_measure(&self) -> f64 {
        if self.songs.is_empty() {
            return 0.0;
        }
        self.songs.iter().map(|s| s.score.f_measure).sum::<f64>() / self.songs.len() as f64
    }

    pub fn songs_csv(&self) -> String {
        let mut out = String::from("dataset,stem,precision,recall,f_measure\n");
        for s in &self.songs {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                s.dataset, s.stem, s.score.precision, s.score.recall, s.score.f_measure
            ));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("dataset,songs,precision,recall,f_measure,f_std\n");
        for d in &self.datasets {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6}\n",
                d.dataset, d.songs, d.mean_precision, d.mean_recall, d.mean_f_measure, d.std_f_measure
            ));
        }
        out
    }
}

/// An audio file paired with its annotation file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SongEntry {
    pub dataset: String,
    pub stem: String,
    pub audio: PathBuf,
    pub annotations: PathBuf,
}

pub fn dataset_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Pairs `<stem>.wav` with `<stem>.beats`, sorted by stem. Unpaired files are
/// skipped with a warning.
pub fn list_dataset(dir: &Path) -> Result<Vec<SongEntry>> {
    if !dir.is_dir() {
        return Err(Error::Missing(dir.to_path_buf()));
    }
    let mut audio = BTreeMap::new();
    let mut ann = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let (Some(stem), Some(ext)) = (path.file_stem(), path.extension()) else {
            continue;
        };
        let stem = stem.to_string_lossy().into_owned();
        if ext == AUDIO_EXT {
            audio.insert(stem, path);
        } else if ext == ANNOTATION_EXT {
            ann.insert(stem, path);
        }
    }
    let name = dataset_name(dir);
    let mut out = Vec::new();
    for (stem, a) in audio {
        match ann.remove(&stem) {
            Some(b) => out.push(SongEntry {
                dataset: name.clone(),
                stem,
                audio: a,
                annotations: b,
            }),
            None => log::warn!("{}: no annotation file for `{stem}`, skipped", dir.display()),
        }
    }
    for stem in ann.keys() {
        log::warn!("{}: no audio file for `{stem}`, skipped", dir.display());
    }
    Ok(out)
}

/// Leave-one-dataset-out rounds: `(held-out index, training indices)`.
pub fn holdout_rounds(n_datasets: usize) -> Vec<(usize, Vec<usize>)> {
    (0..n_datasets)
        .map(|h| (h, (0..n_datasets).filter(|&i| i != h).collect()))
        .collect()
}
