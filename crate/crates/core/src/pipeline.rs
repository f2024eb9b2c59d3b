//! End-to-end chain: features, tatums, windows, networks, HMM and scoring.

use std::borrow::Cow;
use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::annotations::{parse_annotations, AnnotationSet};
use crate::audio::{load_audio, AudioClip};
use crate::ensemble::{
    balance_indices, default_spec, fuse_average, infer_likelihood, is_multi_label, network_name, shift_chroma,
    train_from_source, EnsembleModel, ExampleSource, LikelihoodSeries, Member, Preset, TrainConfig, MEMBER_ORDER,
};
use crate::error::{Error, Result};
use crate::eval::{dataset_name, f_measure, list_dataset, ScoreReport, SongEntry, SongScore};
use crate::features::{extract_all, FeatureKind};
use crate::hmm::{
    annotate_states, emissions_from_likelihood, parse_lengths, states_to_downbeats, threshold_baseline,
    train_transitions, viterbi, BarStateSpace, TransitionMatrix,
};
use crate::manifest::Manifest;
use crate::nn::{Target, Tensor3};
use crate::sync::{
    covered_tatums, downbeat_tatums, make_inputs, make_window, multi_label, quantize_to_grid, window_tatums, SyncFeature,
};
use crate::synth::TATUMS_PER_BEAT;
use crate::tatum::{snap_downbeats, substitute_annotated_grid, track_tatums_or_fallback, TatumGrid};

pub const TRANSITIONS_FILE: &str = "transitions.txt";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const DEFAULT_THRESHOLD: f64 = 0.88;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    Tracked,
    /// Annotated beats with one tatum inserted between each pair.
    Annotated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoder {
    Hmm,
    Threshold,
}

macro_rules! text_enum {
    ($ty:ty, $($variant:path => $text:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $text),+ })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($text => Ok($variant),)+
                    other => Err(Error::invalid(format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

text_enum!(GridMode, GridMode::Tracked => "tracked", GridMode::Annotated => "annotated");
text_enum!(Decoder, Decoder::Hmm => "hmm", Decoder::Threshold => "threshold");

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub bundle: Option<PathBuf>,
    pub preset: Preset,
    pub train: TrainConfig,
    pub grid: GridMode,
    pub snap_downbeats: bool,
    pub decoder: Decoder,
    pub threshold: f64,
    /// `None` means the default set.
    pub bar_lengths: Option<Vec<usize>>,
    /// Networks whose likelihoods are fused.
    pub networks: Vec<FeatureKind>,
    pub boost: f64,
    pub jobs: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bundle: None,
            preset: Preset::Reduced,
            train: TrainConfig::default(),
            grid: GridMode::Tracked,
            snap_downbeats: false,
            decoder: Decoder::Hmm,
            threshold: DEFAULT_THRESHOLD,
            bar_lengths: None,
            networks: MEMBER_ORDER.to_vec(),
            boost: 1.0,
            jobs: None,
        }
    }
}

fn parse_networks(s: &str) -> Result<Vec<FeatureKind>> {
    s.split(',').map(|p| p.parse()).collect()
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.decoder == Decoder::Threshold && self.bar_lengths.is_some() {
            return Err(Error::invalid("bar lengths only apply to the hmm decoder"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.networks.is_empty() {
            return Err(Error::invalid("at least one network must be fused"));
        }
        let distinct: BTreeSet<_> = self.networks.iter().collect();
        if distinct.len() != self.networks.len() {
            return Err(Error::invalid("a network is listed twice"));
        }
        if let Some(l) = &self.bar_lengths {
            BarStateSpace::new(l)?;
        }
        if !(self.boost > 0.0 && self.boost.is_finite()) {
            return Err(Error::invalid(format!("boost {} must be positive", self.boost)));
        }
        if self.jobs == Some(0) {
            return Err(Error::invalid("jobs must be at least 1"));
        }
        Ok(())
    }

    pub fn state_space(&self) -> Result<BarStateSpace> {
        match &self.bar_lengths {
            Some(l) => BarStateSpace::new(l),
            None => Ok(BarStateSpace::standard()),
        }
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn fmt::Display| Error::invalid(format!("bad value for `{key}`: {value} ({e})"));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| bad(&e));
        let int = |v: &str| v.trim().parse::<u64>().map_err(|e| bad(&e));
        match key {
            "bundle" => self.bundle = Some(PathBuf::from(value)),
            "preset" => self.preset = value.parse()?,
            "epochs" => self.train.epochs = int(value)? as usize,
            "lr" => self.train.lr = num(value)?,
            "momentum" => self.train.momentum = num(value)?,
            "batch" => self.train.batch = int(value)? as usize,
            "seed" => self.train.seed = int(value)?,
            "grid" => self.grid = value.parse()?,
            "snap_downbeats" => self.snap_downbeats = value.trim().parse().map_err(|e| bad(&e))?,
            "decoder" => self.decoder = value.parse()?,
            "threshold" => self.threshold = num(value)?,
            "bar_lengths" => {
                self.bar_lengths = if value.trim() == "default" { None } else { Some(parse_lengths(value)?) }
            }
            "networks" => self.networks = parse_networks(value)?,
            "boost" => self.boost = num(value)?,
            "jobs" => self.jobs = Some(int(value)? as usize),
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in m.iter() {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        Self::from_manifest(&Manifest::read(path)?)
    }

    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        if let Some(b) = &self.bundle {
            m.set("bundle", b.display());
        }
        m.set("preset", self.preset)
            .set("epochs", self.train.epochs)
            .set("lr", self.train.lr)
            .set("momentum", self.train.momentum)
            .set("batch", self.train.batch)
            .set("seed", self.train.seed)
            .set("grid", self.grid)
            .set("snap_downbeats", self.snap_downbeats)
            .set("decoder", self.decoder)
            .set("threshold", self.threshold)
            .set(
                "bar_lengths",
                self.bar_lengths
                    .as_ref()
                    .map(|l| l.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
                    .unwrap_or_else(|| "default".into()),
            )
            .set(
                "networks",
                self.networks.iter().map(|k| network_name(*k)).collect::<Vec<_>>().join(","),
            )
            .set("boost", self.boost);
        if let Some(j) = self.jobs {
            m.set("jobs", j);
        }
        m
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_manifest().to_string().as_bytes()))
    }
}

/// Everything the networks need from one song.
#[derive(Debug, Clone)]
pub struct PreparedSong {
    pub dataset: String,
    pub stem: String,
    pub duration: f64,
    pub grid: TatumGrid,
    /// In `MEMBER_ORDER`.
    pub sync: Vec<SyncFeature>,
    pub annotations: Option<AnnotationSet>,
    pub downbeat_tatums: BTreeSet<usize>,
}

impl PreparedSong {
    pub fn sync_for(&self, kind: FeatureKind) -> &SyncFeature {
        self.sync.iter().find(|s| s.kind == kind).expect("all kinds are prepared")
    }
}

/// Features, tatum grid (tracked or annotated, optionally snapped) and
/// tatum-synchronous features.
pub fn prepare_clip(clip: &AudioClip, annotations: Option<AnnotationSet>, cfg: &PipelineConfig) -> Result<PreparedSong> {
    let features = extract_all(clip)?;
    let odf = features.iter().find(|f| f.kind == FeatureKind::Odf).expect("odf present");
    let mut grid = track_tatums_or_fallback(odf, clip.duration())?;
    if cfg.grid == GridMode::Annotated {
        let beats = annotations
            .as_ref()
            .and_then(|a| a.beat_times.as_deref())
            .ok_or_else(|| Error::invalid("annotated grid needs beat annotations"))?;
        grid = substitute_annotated_grid(&grid, beats, TATUMS_PER_BEAT)?;
    }
    if cfg.snap_downbeats {
        let ann = annotations
            .as_ref()
            .ok_or_else(|| Error::invalid("snapping needs downbeat annotations"))?;
        grid = snap_downbeats(&grid, &ann.downbeat_times)?;
    }
    if grid.len() < 2 {
        return Err(Error::Segmentation(format!("only {} tatums", grid.len())));
    }
    let sync = MEMBER_ORDER
        .iter()
        .map(|&k| {
            let feat = features.iter().find(|f| f.kind == k).expect("all kinds extracted");
            quantize_to_grid(feat, &grid)
        })
        .collect::<Result<Vec<_>>>()?;
    let db = annotations
        .as_ref()
        .map(|a| downbeat_tatums(&grid, &a.downbeat_times))
        .unwrap_or_default();
    Ok(PreparedSong {
        dataset: annotations.as_ref().map(|a| a.source.clone()).unwrap_or_default(),
        stem: String::new(),
        duration: clip.duration(),
        grid,
        sync,
        annotations,
        downbeat_tatums: db,
    })
}

pub fn prepare_entry(entry: &SongEntry, cfg: &PipelineConfig) -> Result<PreparedSong> {
    let clip = load_audio(&entry.audio)?;
    let ann = parse_annotations(&entry.annotations)?;
    let mut song = prepare_clip(&clip, Some(ann), cfg)?;
    song.dataset = entry.dataset.clone();
    song.stem = entry.stem.clone();
    Ok(song)
}

pub fn prepare_entries(entries: &[SongEntry], cfg: &PipelineConfig) -> Result<Vec<PreparedSong>> {
    entries.par_iter().map(|e| prepare_entry(e, cfg)).collect()
}

/// Hash over stems, audio bytes and annotation bytes, in order.
pub fn data_fingerprint(entries: &[SongEntry]) -> Result<String> {
    let mut h = Sha256::new();
    for e in entries {
        h.update(e.dataset.as_bytes());
        h.update([0]);
        h.update(e.stem.as_bytes());
        h.update([0]);
        for p in [&e.audio, &e.annotations] {
            let bytes = std::fs::read(p).map_err(|err| Error::io(p, err))?;
            h.update(Sha256::digest(&bytes));
        }
    }
    Ok(hex::encode(h.finalize()))
}

struct ExampleRef {
    song: usize,
    center: usize,
    shift: usize,
    target: Target,
}

/// Training windows built on demand from the tatum-synchronous features.
struct WindowBank<'a> {
    songs: &'a [PreparedSong],
    kind: FeatureKind,
    items: Vec<ExampleRef>,
}

impl ExampleSource for WindowBank<'_> {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn example(&self, i: usize) -> Result<(Cow<'_, Tensor3>, Cow<'_, Target>)> {
        let item = &self.items[i];
        let sf = self.songs[item.song].sync_for(self.kind);
        let mut window = make_window(sf, item.center, window_tatums(self.kind))?.window;
        if item.shift > 0 {
            window = shift_chroma(&window, item.shift)?;
        }
        Ok((Cow::Owned(window), Cow::Borrowed(&item.target)))
    }
}

fn window_bank<'a>(songs: &'a [PreparedSong], kind: FeatureKind, rng: &mut ChaCha8Rng) -> Result<WindowBank<'a>> {
    let w = window_tatums(kind);
    let mut items = Vec::new();
    for (s, song) in songs.iter().enumerate() {
        for center in 0..song.grid.len() {
            let target = if is_multi_label(kind) {
                Target::Vector(multi_label(&covered_tatums(center, w, song.grid.len()), &song.downbeat_tatums))
            } else {
                Target::Class(usize::from(song.downbeat_tatums.contains(&center)))
            };
            items.push(ExampleRef {
                song: s,
                center,
                shift: 0,
                target,
            });
        }
    }
    if !is_multi_label(kind) {
        let labels: Vec<usize> = items
            .iter()
            .map(|i| match i.target {
                Target::Class(c) => c,
                Target::Vector(_) => unreachable!(),
            })
            .collect();
        let keep = balance_indices(&labels, rng)?;
        let mut kept = Vec::with_capacity(keep.len());
        let mut it = items.into_iter().enumerate();
        for k in keep {
            kept.push(it.by_ref().find(|(i, _)| *i == k).expect("ascending").1);
        }
        items = kept;
    }
    if kind == FeatureKind::Chroma {
        items = items
            .into_iter()
            .flat_map(|it| {
                (0..12).map(move |shift| ExampleRef {
                    song: it.song,
                    center: it.center,
                    shift,
                    target: it.target.clone(),
                })
            })
            .collect();
    }
    Ok(WindowBank { songs, kind, items })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub ensemble: EnsembleModel,
    pub space: BarStateSpace,
    pub transitions: TransitionMatrix,
    pub boost: f64,
}

impl ModelBundle {
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.ensemble.save(dir)?;
        self.transitions.save(&dir.join(TRANSITIONS_FILE), &self.space, self.boost)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Missing(dir.to_path_buf()));
        }
        let ensemble = EnsembleModel::load(dir)?;
        let path = dir.join(TRANSITIONS_FILE);
        let (space, transitions) = TransitionMatrix::load(&path)?;
        let boost = Manifest::read(&path)?.parse_value("boost", &path)?;
        Ok(Self {
            ensemble,
            space,
            transitions,
            boost,
        })
    }
}

/// Per-epoch mean training loss of each network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub curves: Vec<(FeatureKind, Vec<f64>)>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch");
        for (k, _) in &self.curves {
            out.push(',');
            out.push_str(network_name(*k));
        }
        out.push('\n');
        let epochs = self.curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
        for e in 0..epochs {
            out.push_str(&(e + 1).to_string());
            for (_, c) in &self.curves {
                out.push_str(&c.get(e).map(|v| format!(",{v:.6}")).unwrap_or_else(|| ",".into()));
            }
            out.push('\n');
        }
        out
    }
}

/// Trains the four networks and the transition matrix.
pub fn train_bundle(songs: &[PreparedSong], cfg: &PipelineConfig, fingerprint: &str) -> Result<(ModelBundle, TrainingLog)> {
    if songs.is_empty() {
        return Err(Error::invalid("no training songs"));
    }
    if let Some(s) = songs.iter().find(|s| s.annotations.is_none()) {
        return Err(Error::invalid(format!("song `{}` has no annotations", s.stem)));
    }
    let mut members = Vec::new();
    let mut curves = Vec::new();
    for (m, &kind) in MEMBER_ORDER.iter().enumerate() {
        let seed = cfg.train.seed.wrapping_add(m as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let bank = window_bank(songs, kind, &mut rng)?;
        let spec = default_spec(kind, cfg.preset);
        log::info!("training {} on {} windows", network_name(kind), bank.items.len());
        let out = train_from_source(&spec, &bank, &TrainConfig { seed, ..cfg.train })?;
        curves.push((kind, out.losses.clone()));
        members.push(Member {
            kind,
            network: out.network,
            seed,
            losses: out.losses,
        });
    }
    let space = cfg.state_space()?;
    let sequences: Vec<Vec<usize>> = songs
        .iter()
        .filter_map(|s| {
            let db: Vec<usize> = s.downbeat_tatums.iter().copied().collect();
            annotate_states(&space, &db).map(|(_, seq)| seq)
        })
        .collect();
    let transitions = train_transitions(&space, &sequences, cfg.boost)?;
    let bundle = ModelBundle {
        ensemble: EnsembleModel {
            members,
            preset: cfg.preset,
            config: cfg.train,
            data_fingerprint: fingerprint.to_string(),
        },
        space,
        transitions,
        boost: cfg.boost,
    };
    Ok((bundle, TrainingLog { curves }))
}

pub fn write_bundle(dir: &Path, bundle: &ModelBundle, log: &TrainingLog) -> Result<()> {
    bundle.save(dir)?;
    let p = dir.join(TRAINING_LOG_FILE);
    std::fs::write(&p, log.to_csv()).map_err(|e| Error::io(p, e))
}

/// SHA-256 over the bundle's files (names and contents, sorted by name).
pub fn bundle_hash(dir: &Path) -> Result<String> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
        h.update([0]);
        h.update(std::fs::read(&f).map_err(|e| Error::io(&f, e))?);
    }
    Ok(hex::encode(h.finalize()))
}

/// Per-network likelihoods and their mean.
pub fn infer_song(song: &PreparedSong, bundle: &ModelBundle, networks: &[FeatureKind]) -> Result<(Vec<LikelihoodSeries>, LikelihoodSeries)> {
    let series = networks
        .iter()
        .map(|&kind| {
            let member = bundle
                .ensemble
                .member(kind)
                .ok_or_else(|| Error::invalid(format!("bundle has no {} network", network_name(kind))))?;
            let inputs = make_inputs(song.sync_for(kind), window_tatums(kind))?;
            infer_likelihood(&member.network, &inputs, song.grid.len(), network_name(kind))
        })
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse_average(&series)?;
    Ok((series, fused))
}

/// Downbeat times from a fused likelihood.
pub fn decode(bundle: &ModelBundle, grid: &TatumGrid, d: &[f64], decoder: Decoder, threshold: f64) -> Result<Vec<f64>> {
    match decoder {
        Decoder::Hmm => {
            let e = emissions_from_likelihood(&bundle.space, d);
            let path = viterbi(&bundle.space, &bundle.transitions, &e)?;
            states_to_downbeats(&path, grid)
        }
        Decoder::Threshold => Ok(threshold_baseline(d, threshold)
            .into_iter()
            .map(|k| grid.tatum_times[k])
            .collect()),
    }
}

fn check_space(bundle: &ModelBundle, cfg: &PipelineConfig) -> Result<()> {
    if let Some(l) = &cfg.bar_lengths {
        let want = BarStateSpace::new(l)?;
        if want != bundle.space {
            return Err(Error::invalid(format!(
                "bundle transitions cover bar lengths {}, not {}",
                bundle.space.describe(),
                want.describe()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackOutput {
    pub tatum_times: Vec<f64>,
    pub likelihoods: Vec<(String, Vec<f64>)>,
    pub fused: Vec<f64>,
    pub downbeats: Vec<f64>,
}

impl TrackOutput {
    /// `{"tatum_times": [...], "<network>": [...], "fused": [...], "downbeats": [...]}`.
    pub fn likelihood_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        map.insert("tatum_times".into(), self.tatum_times.clone().into());
        for (name, values) in &self.likelihoods {
            map.insert(name.clone(), values.clone().into());
        }
        map.insert("fused".into(), self.fused.clone().into());
        map.insert("downbeats".into(), self.downbeats.clone().into());
        serde_json::Value::Object(map)
    }
}

pub fn track_clip(clip: &AudioClip, bundle: &ModelBundle, cfg: &PipelineConfig) -> Result<TrackOutput> {
    cfg.validate()?;
    check_space(bundle, cfg)?;
    let song = prepare_clip(clip, None, &PipelineConfig { snap_downbeats: false, grid: GridMode::Tracked, ..cfg.clone() })?;
    let (series, fused) = infer_song(&song, bundle, &cfg.networks)?;
    let downbeats = decode(bundle, &song.grid, &fused.values, cfg.decoder, cfg.threshold)?;
    Ok(TrackOutput {
        tatum_times: song.grid.tatum_times.clone(),
        likelihoods: series.into_iter().map(|s| (s.source, s.values)).collect(),
        fused: fused.values,
        downbeats,
    })
}

/// One report per decoder, all from a single inference pass per song.
pub fn evaluate_songs(bundle: &ModelBundle, songs: &[PreparedSong], cfg: &PipelineConfig, decoders: &[Decoder]) -> Result<Vec<ScoreReport>> {
    check_space(bundle, cfg)?;
    let per_song: Vec<Vec<SongScore>> = songs
        .par_iter()
        .map(|song| -> Result<Vec<SongScore>> {
            let ann = song
                .annotations
                .as_ref()
                .ok_or_else(|| Error::invalid(format!("song `{}` has no annotations", song.stem)))?;
            let (_, fused) = infer_song(song, bundle, &cfg.networks)?;
            decoders
                .iter()
                .map(|&dec| {
                    let est = decode(bundle, &song.grid, &fused.values, dec, cfg.threshold)?;
                    Ok(SongScore {
                        dataset: song.dataset.clone(),
                        stem: song.stem.clone(),
                        score: f_measure(&est, &ann.downbeat_times, song.duration),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(decoders
        .iter()
        .enumerate()
        .map(|(d, dec)| ScoreReport::new(dec.to_string(), per_song.iter().map(|s| s[d].clone()).collect()))
        .collect())
}

/// Result of one held-out round.
#[derive(Debug, Clone, Serialize)]
pub struct RoundReport {
    pub holdout: String,
    pub bundle_hash: Option<String>,
    pub reports: Vec<ScoreReport>,
}

/// Writes `<holdout>_<mode>_songs.csv`, `<holdout>_<mode>_summary.csv` and
/// `report.json` into `dir`.
pub fn write_reports(dir: &Path, rounds: &[RoundReport], cfg: &PipelineConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for round in rounds {
        for r in &round.reports {
            let songs = dir.join(format!("{}_{}_songs.csv", round.holdout, r.mode));
            std::fs::write(&songs, r.songs_csv()).map_err(|e| Error::io(songs, e))?;
            let summary = dir.join(format!("{}_{}_summary.csv", round.holdout, r.mode));
            std::fs::write(&summary, r.summary_csv()).map_err(|e| Error::io(summary, e))?;
        }
    }
    let json = serde_json::json!({
        "config_fingerprint": cfg.fingerprint(),
        "config": cfg.to_manifest().iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<std::collections::BTreeMap<_, _>>(),
        "rounds": rounds,
    });
    let path = dir.join("report.json");
    let text = serde_json::to_string_pretty(&json).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Leave-one-dataset-out rounds. With `holdout` only that dataset's round is
/// run. With a bundle in the config nothing is trained and every selected
/// dataset is scored with it. Trained bundles are written under
/// `work_dir/<holdout>` when given.
pub fn run_dataset_eval(
    dirs: &[PathBuf],
    holdout: Option<&str>,
    cfg: &PipelineConfig,
    decoders: &[Decoder],
    work_dir: Option<&Path>,
) -> Result<Vec<RoundReport>> {
    cfg.validate()?;
    if dirs.is_empty() {
        return Err(Error::invalid("no dataset directories"));
    }
    if decoders.is_empty() {
        return Err(Error::invalid("no decoding mode selected"));
    }
    let datasets = dirs.iter().map(|d| list_dataset(d)).collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = dirs.iter().map(|d| dataset_name(d)).collect();
    let selected: Vec<usize> = match holdout {
        Some(h) => vec![names
            .iter()
            .position(|n| n == h)
            .ok_or_else(|| Error::invalid(format!("holdout `{h}` is not among the datasets")))?],
        None => (0..dirs.len()).collect(),
    };
    let fixed = cfg.bundle.as_deref().map(ModelBundle::load).transpose()?;
    let mut rounds = Vec::new();
    for held in selected {
        let test = prepare_entries(&datasets[held], cfg)?;
        let (bundle, hash) = match &fixed {
            Some(b) => (b.clone(), None),
            None => {
                let train_entries: Vec<SongEntry> = datasets
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != held)
                    .flat_map(|(_, d)| d.iter().cloned())
                    .collect();
                if train_entries.is_empty() {
                    return Err(Error::invalid(format!(
                        "holding out `{}` leaves no training songs",
                        names[held]
                    )));
                }
                let train = prepare_entries(&train_entries, cfg)?;
                let (bundle, log) = train_bundle(&train, cfg, &data_fingerprint(&train_entries)?)?;
                let hash = match work_dir {
                    Some(w) => {
                        let dir = w.join(&names[held]);
                        write_bundle(&dir, &bundle, &log)?;
                        Some(bundle_hash(&dir)?)
                    }
                    None => None,
                };
                (bundle, hash)
            }
        };
        rounds.push(RoundReport {
            holdout: names[held].clone(),
            bundle_hash: hash,
            reports: evaluate_songs(&bundle, &test, cfg, decoders)?,
        });
    }
    Ok(rounds)
}
