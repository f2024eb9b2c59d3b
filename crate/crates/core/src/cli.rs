//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audio::load_audio;
use crate::error::{Error, Result};
use crate::eval::{dataset_name, list_dataset, SongEntry};
use crate::features::FeatureKind;
use crate::manifest::Manifest;
use crate::pipeline::{
    bundle_hash, data_fingerprint, prepare_entries, run_dataset_eval, track_clip, train_bundle, write_bundle, write_reports,
    Decoder, GridMode, ModelBundle, PipelineConfig,
};
use crate::synth::{generate_corpus, CorpusConfig};
use crate::tatum::track_tatums_or_fallback;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_MISSING: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "downbeat", version, about = "Downbeat tracking and its training/evaluation harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the downbeat times of an audio file.
    Track {
        audio: PathBuf,
        /// `downbeats` (one time per line) or `likelihoods` (JSON).
        #[arg(long, default_value = "downbeats")]
        emit: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Dump a feature matrix as CSV.
    Features {
        audio: PathBuf,
        #[arg(long, default_value = "chroma")]
        kind: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print tatum times.
    Tatums {
        audio: PathBuf,
        /// Also write the pulse curve as CSV here.
        #[arg(long)]
        plp: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the four networks and the transition matrix.
    Train {
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
        /// Bundle directory to write.
        #[arg(long)]
        out: PathBuf,
        /// Dataset (directory name) left out of training.
        #[arg(long)]
        holdout: Option<String>,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Leave-one-dataset-out evaluation, or scoring with a given bundle.
    Eval {
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
        #[arg(long)]
        holdout: Option<String>,
        /// Comma-separated: hmm, threshold, annotated, snap.
        #[arg(long, default_value = "hmm")]
        mode: String,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Write a synthetic dataset.
    Synth {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Fraction of songs in 4/4.
        #[arg(long, default_value_t = 0.7)]
        duple: f64,
        #[arg(long, default_value_t = 30.0)]
        duration: f64,
    },
}

/// Every flag has a config-file key of the same name with `_` for `-`.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// key=value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub momentum: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// `tracked` or `annotated`.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub snap_downbeats: Option<String>,
    /// `hmm` or `threshold`.
    #[arg(long)]
    pub decoder: Option<String>,
    #[arg(long, short = 't', visible_alias = "t")]
    pub threshold: Option<String>,
    /// Comma-separated bar lengths in tatums, or `default`.
    #[arg(long)]
    pub bar_lengths: Option<String>,
    /// Comma-separated subset of mcnn, rcnn, hcnn, bcnn to fuse.
    #[arg(long)]
    pub networks: Option<String>,
    #[arg(long)]
    pub boost: Option<String>,
    #[arg(long)]
    pub jobs: Option<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            if !path.exists() {
                return Err(Error::Missing(path.clone()));
            }
            for (k, v) in Manifest::read(path)?.iter() {
                cfg.set(k, v)?;
            }
        }
        let bundle = self.bundle.as_ref().map(|p| p.display().to_string());
        let flags = [
            ("bundle", &bundle),
            ("preset", &self.preset),
            ("epochs", &self.epochs),
            ("lr", &self.lr),
            ("momentum", &self.momentum),
            ("batch", &self.batch),
            ("seed", &self.seed),
            ("grid", &self.grid),
            ("snap_downbeats", &self.snap_downbeats),
            ("decoder", &self.decoder),
            ("threshold", &self.threshold),
            ("bar_lengths", &self.bar_lengths),
            ("networks", &self.networks),
            ("boost", &self.boost),
            ("jobs", &self.jobs),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Missing(_) => EXIT_MISSING,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING,
        _ => EXIT_FAILURE,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Io { .. } => "io",
        Error::Format { .. } => "format",
        Error::InputTooShort { .. } => "input_too_short",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::Shape(_) => "shape",
        Error::Segmentation(_) => "segmentation",
        Error::Parse { .. } => "parse",
        Error::Diverged { .. } => "diverged",
        Error::TooLarge(_) => "too_large",
        Error::Missing(_) => "missing",
        Error::Malformed { .. } => "malformed",
    }
}

/// `error[<kind>]: <message>` on a single line.
pub fn error_line(err: &Error) -> String {
    let msg = err.to_string().replace(['\n', '\r'], " ");
    format!("error[{}]: {msg}", error_kind(err))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn lines(times: &[f64]) -> String {
    times.iter().map(|t| format!("{t:.6}\n")).collect()
}

fn set_jobs(cfg: &PipelineConfig) {
    if let Some(n) = cfg.jobs {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("worker pool already initialised; --jobs ignored");
        }
    }
}

struct EvalModes {
    decoders: Vec<Decoder>,
    annotated: bool,
    snap: bool,
}

fn parse_modes(s: &str) -> Result<EvalModes> {
    let mut m = EvalModes {
        decoders: Vec::new(),
        annotated: false,
        snap: false,
    };
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok {
            "hmm" => m.decoders.push(Decoder::Hmm),
            "threshold" => m.decoders.push(Decoder::Threshold),
            "annotated" => m.annotated = true,
            "snap" => m.snap = true,
            other => return Err(Error::invalid(format!("unknown eval mode `{other}`"))),
        }
    }
    m.decoders.dedup();
    if m.decoders.is_empty() {
        m.decoders.push(Decoder::Hmm);
    }
    Ok(m)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Track { audio, emit: what, out, opts } => {
            let cfg = opts.resolve()?;
            set_jobs(&cfg);
            let bundle_dir = cfg
                .bundle
                .clone()
                .ok_or_else(|| Error::invalid("track needs --bundle (or `bundle` in the config file)"))?;
            let bundle = ModelBundle::load(&bundle_dir)?;
            let clip = load_audio(&audio)?;
            let result = track_clip(&clip, &bundle, &cfg)?;
            let text = match what.as_str() {
                "downbeats" => lines(&result.downbeats),
                "likelihoods" => {
                    serde_json::to_string(&result.likelihood_json()).map_err(|e| Error::invalid(e.to_string()))? + "\n"
                }
                other => return Err(Error::invalid(format!("unknown --emit value `{other}`"))),
            };
            emit(out.as_deref(), &text)
        }
        Command::Features { audio, kind, out } => {
            let kind: FeatureKind = kind.parse()?;
            let clip = load_audio(&audio)?;
            emit(out.as_deref(), &kind.extract(&clip)?.to_csv())
        }
        Command::Tatums { audio, plp, out } => {
            let clip = load_audio(&audio)?;
            let odf = FeatureKind::Odf.extract(&clip)?;
            let grid = track_tatums_or_fallback(&odf, clip.duration())?;
            if let Some(p) = plp {
                let mut csv = String::from("time,plp\n");
                for (t, v) in grid.plp_times.iter().zip(&grid.plp) {
                    csv.push_str(&format!("{t:.6},{v:.6}\n"));
                }
                emit(Some(&p), &csv)?;
            }
            emit(out.as_deref(), &lines(&grid.tatum_times))
        }
        Command::Train {
            datasets,
            out,
            holdout,
            opts,
        } => {
            let cfg = opts.resolve()?;
            set_jobs(&cfg);
            if let Some(h) = &holdout {
                if !datasets.iter().any(|d| &dataset_name(d) == h) {
                    return Err(Error::invalid(format!("holdout `{h}` is not among the datasets")));
                }
            }
            let mut entries: Vec<SongEntry> = Vec::new();
            for d in datasets.iter().filter(|d| Some(dataset_name(d)) != holdout) {
                entries.extend(list_dataset(d)?);
            }
            if entries.is_empty() {
                return Err(Error::invalid("no training songs found"));
            }
            let songs = prepare_entries(&entries, &cfg)?;
            let (bundle, log) = train_bundle(&songs, &cfg, &data_fingerprint(&entries)?)?;
            write_bundle(&out, &bundle, &log)?;
            emit(None, &format!("bundle {} sha256 {}\n", out.display(), bundle_hash(&out)?))
        }
        Command::Eval {
            datasets,
            holdout,
            mode,
            out,
            opts,
        } => {
            let mut cfg = opts.resolve()?;
            let modes = parse_modes(&mode)?;
            if modes.annotated {
                cfg.grid = GridMode::Annotated;
            }
            cfg.snap_downbeats |= modes.snap;
            cfg.validate()?;
            set_jobs(&cfg);
            let rounds = run_dataset_eval(&datasets, holdout.as_deref(), &cfg, &modes.decoders, Some(&out.join("bundles")))?;
            write_reports(&out, &rounds, &cfg)?;
            let mut text = String::new();
            for r in &rounds {
                for rep in &r.reports {
                    text.push_str(&format!("{} {} {:.6}\n", r.holdout, rep.mode, rep.mean_f_measure()));
                }
            }
            emit(None, &text)
        }
        Command::Synth {
            n,
            seed,
            out,
            duple,
            duration,
        } => {
            let cfg = CorpusConfig {
                n_songs: n,
                duple_share: duple,
                duration,
                seed,
                ..CorpusConfig::default()
            };
            let paths = generate_corpus(&out, &cfg)?;
            emit(None, &format!("wrote {} songs to {}\n", paths.len(), out.display()))
        }
    }
}

/// Parses arguments, runs and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "threshold=0.5\nepochs=3\n").unwrap();
        let args = ConfigArgs {
            config: Some(path),
            epochs: Some("7".into()),
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.threshold, 0.5);
        assert_eq!(cfg.train.epochs, 7);
    }

    #[test]
    fn conflicting_flags_are_usage_errors() {
        let args = ConfigArgs {
            decoder: Some("threshold".into()),
            bar_lengths: Some("3,4".into()),
            ..Default::default()
        };
        let err = args.resolve().unwrap_err();
        assert_eq!(exit_code(&err), EXIT_USAGE);
    }

    #[test]
    fn missing_bundle_exits_with_two() {
        let code = main_with_args(["downbeat", "track", "x.wav", "--bundle", "/nonexistent/bundle"]);
        assert_eq!(code, EXIT_MISSING);
        assert_eq!(main_with_args(["downbeat", "bogus"]), EXIT_USAGE);
    }

    #[test]
    fn error_line_is_single_line() {
        let e = Error::Missing(PathBuf::from("/a/b"));
        assert_eq!(error_line(&e), "error[missing]: missing resource: /a/b");
    }
}
