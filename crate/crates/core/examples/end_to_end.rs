//! Generates a small synthetic corpus, trains the reduced ensemble and
//! scores held-out songs with the HMM and the threshold baseline.
//!
//!     cargo run --release --example end_to_end -- [train_songs] [epochs] [work_dir]

use std::path::PathBuf;

use downbeat::pipeline::{run_dataset_eval, write_reports, Decoder, PipelineConfig};
use downbeat::synth::{generate_corpus, CorpusConfig};

fn main() -> downbeat::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(10, |a| a.parse().expect("train_songs"));
    let epochs: usize = args.next().map_or(30, |a| a.parse().expect("epochs"));
    let work = PathBuf::from(args.next().unwrap_or_else(|| "e2e_out".into()));

    let train = work.join("train");
    let heldout = work.join("heldout");
    generate_corpus(&train, &CorpusConfig { n_songs: n, seed: 1, ..CorpusConfig::default() })?;
    generate_corpus(&heldout, &CorpusConfig { n_songs: 5, seed: 2, ..CorpusConfig::default() })?;

    let mut cfg = PipelineConfig::default();
    cfg.train.epochs = epochs;
    let rounds = run_dataset_eval(
        &[train, heldout],
        Some("heldout"),
        &cfg,
        &[Decoder::Hmm, Decoder::Threshold],
        Some(&work.join("bundles")),
    )?;
    write_reports(&work.join("reports"), &rounds, &cfg)?;
    for report in &rounds[0].reports {
        println!("{:9}  mean F {:6.2}", report.mode, report.mean_f_measure());
        print!("{}", report.songs_csv());
    }
    println!("reports in {}", work.join("reports").display());
    Ok(())
}
