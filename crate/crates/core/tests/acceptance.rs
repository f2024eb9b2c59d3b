use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use downbeat::audio::AudioClip;
use downbeat::ensemble::{default_specs, is_multi_label, Preset};
use downbeat::eval::{f_measure, tatum_recall};
use downbeat::features::{decile_clip, extract_all, FeatureKind};
use downbeat::hmm::{brute_force_decode, train_transitions, viterbi, BarStateSpace, TransitionMatrix};
use downbeat::nn::{conv_forward, gradient_check, GradCheckConfig, Network, Target, Tensor3};
use downbeat::pipeline::{run_dataset_eval, write_reports, Decoder, PipelineConfig};
use downbeat::synth::{corpus_recipes, generate_corpus, generate_song, CorpusConfig};
use downbeat::tatum::{best_path_dp, path_score, track_tatums_or_fallback, Tempogram};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const E2E_SEED: u64 = 2024;
const E2E_MIN_F: f64 = 90.0;
const GOLDEN_LOG: &str = "tests/golden/e2e_calibration.txt";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(budget: Duration, elapsed: Duration) -> bool {
    elapsed <= budget
}

fn random_matrix(space: &BarStateSpace, rng: &mut ChaCha8Rng) -> TransitionMatrix {
    let n = space.len();
    if rng.gen_bool(0.5) {
        let mut a = vec![0.0; n * n];
        for row in a.chunks_mut(n) {
            for v in row.iter_mut() {
                *v = rng.gen_range(0.01..1.0);
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        TransitionMatrix { n, a }
    } else {
        let seqs: Vec<Vec<usize>> = (0..3)
            .map(|_| (0..rng.gen_range(2..12)).map(|_| rng.gen_range(0..n)).collect())
            .collect();
        train_transitions(space, &seqs, rng.gen_range(1.0..3.0)).unwrap()
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spaces = [BarStateSpace::new(&[3, 4]).unwrap(), BarStateSpace::new(&[2, 3]).unwrap()];
    let mut mismatches = 0;
    for case in 0..200 {
        let space = &spaces[case % 2];
        let a = random_matrix(space, &mut rng);
        let t = rng.gen_range(1..=8);
        let e: Vec<Vec<f64>> = (0..t)
            .map(|_| (0..space.len()).map(|_| rng.gen_range(1e-3..1.0)).collect())
            .collect();
        let v = viterbi(space, &a, &e).unwrap();
        let b = brute_force_decode(space, &a, &e).unwrap();
        if v.states != b.states {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && within(Duration::from_secs(10), elapsed),
        format!("200 cases, {mismatches} path mismatches, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn oracle_conv(x: &Tensor3, w: &[f64], b: &[f64], shape: [usize; 4]) -> Tensor3 {
    let [t1, v1, l, n1] = shape;
    let [n, m, _] = x.dims();
    let mut z = Tensor3::zeros([n - t1 + 1, m - v1 + 1, n1]);
    for t in 0..n - t1 + 1 {
        for v in 0..m - v1 + 1 {
            for o in 0..n1 {
                let mut s = b[o];
                for dt in 0..t1 {
                    for dv in 0..v1 {
                        for c in 0..l {
                            s += w[((dt * v1 + dv) * l + c) * n1 + o] * x.get(t + dt, v + dv, c);
                        }
                    }
                }
                z.set(t, v, o, s);
            }
        }
    }
    z
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let t1 = rng.gen_range(1..=5);
        let v1 = rng.gen_range(1..=5);
        let l = rng.gen_range(1..=4);
        let n1 = rng.gen_range(1..=4);
        let n = t1 + rng.gen_range(0..8);
        let m = v1 + rng.gen_range(0..8);
        let x = Tensor3::from_vec([n, m, l], (0..n * m * l).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let w: Vec<f64> = (0..t1 * v1 * l * n1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = conv_forward(&x, &w, &b, [t1, v1, l, n1]).unwrap();
        let want = oracle_conv(&x, &w, &b, [t1, v1, l, n1]);
        assert_eq!(got.dims(), want.dims());
        for (g, o) in got.data().iter().zip(want.data()) {
            worst = worst.max((g - o).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-12 && within(Duration::from_secs(10), elapsed),
        format!("200 cases, max abs error {worst:.2e}, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    let mut all_layers_checked = true;
    for (kind, spec) in default_specs(Preset::Reduced) {
        let [n, m, l] = spec.input_dims;
        let x = Tensor3::from_vec([n, m, l], (0..n * m * l).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let target = if is_multi_label(kind) {
            Target::Vector((0..spec.output_len()).map(|_| f64::from(rng.gen_bool(0.2))).collect())
        } else {
            Target::Class(rng.gen_range(0..2))
        };
        let net = Network::init(spec, 30 + kind as u64).unwrap();
        let cfg = GradCheckConfig {
            dropout_seed: Some(5),
            ..Default::default()
        };
        let report = gradient_check(&net, &x, &target, &cfg).unwrap();
        all_layers_checked &= report.per_layer.len() == net.spec.layers.len() && report.checked > 0;
        worst = worst.max(report.max_rel_error);
        parts.push(format!("{kind}: {} checked, max rel {:.1e}", report.checked, report.max_rel_error));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && all_layers_checked && within(Duration::from_secs(60), elapsed),
        format!("{}; {:.1} s", parts.join("; "), elapsed.as_secs_f64()),
    )
}

fn exhaustive_path(mags: &Array2<f64>) -> Vec<usize> {
    let frames = mags.nrows();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut path = vec![0usize; frames];
    fn walk(t: usize, path: &mut Vec<usize>, mags: &Array2<f64>, best: &mut Option<(f64, Vec<usize>)>) {
        let (frames, bins) = mags.dim();
        if t == frames {
            let s = path_score(mags, path).expect("only legal paths are enumerated");
            if best.as_ref().map_or(true, |(b, _)| s > *b) {
                *best = Some((s, path.clone()));
            }
            return;
        }
        let range = if t == 0 {
            0..bins
        } else {
            path[t - 1].saturating_sub(2)..(path[t - 1] + 3).min(bins)
        };
        for b in range {
            path[t] = b;
            walk(t + 1, path, mags, best);
        }
    }
    walk(0, &mut path, mags, &mut best);
    best.expect("at least one path").1
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..50 {
        let mags = Array2::from_shape_fn((10, 5), |_| rng.gen::<f64>());
        let tg = Tempogram {
            phases: Array2::zeros((10, 5)),
            magnitudes: mags.clone(),
            tempo_axis: (0..5).map(|b| 60.0 + b as f64).collect(),
            frame_times: (0..10).map(|t| t as f64).collect(),
            frame_rate: 1.0,
            half_window: 1,
        };
        if best_path_dp(&tg).bins != exhaustive_path(&mags) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("50 instances, {mismatches} mismatches"))
}

const FEATURE_SR: f64 = 44100.0;

fn midi_hz(note: f64) -> f64 {
    440.0 * 2f64.powf((note - 69.0) / 12.0)
}

fn chord_clip(notes: &[(f64, f64)], secs: f64) -> AudioClip {
    let n = (secs * FEATURE_SR) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / FEATURE_SR;
            notes
                .iter()
                .map(|&(note, amp)| amp * (2.0 * std::f64::consts::PI * midi_hz(note) * t).sin())
                .sum::<f64>()
                * 0.2
        })
        .collect();
    AudioClip::new(samples, FEATURE_SR).unwrap()
}

fn noise_clip(rng: &mut ChaCha8Rng, secs: f64) -> AudioClip {
    let n = (secs * FEATURE_SR) as usize;
    let clicks: Vec<usize> = (0..rng.gen_range(2..12)).map(|_| rng.gen_range(0..n)).collect();
    let level = rng.gen_range(0.01..0.3);
    let samples = (0..n)
        .map(|i| {
            let burst = clicks.iter().any(|&c| i >= c && i < c + 400);
            level * rng.gen_range(-1.0..1.0) + if burst { rng.gen_range(-0.6..0.6) } else { 0.0 }
        })
        .collect();
    AudioClip::new(samples, FEATURE_SR).unwrap()
}

fn mean_chroma(clip: &AudioClip) -> Vec<f64> {
    let c = FeatureKind::Chroma.extract(clip).unwrap();
    let rows = c.frames();
    let mut sum = vec![0.0; 12];
    for r in rows / 4..rows - rows / 4 {
        for (k, s) in sum.iter_mut().enumerate() {
            *s += c.values[[r, k]];
        }
    }
    let total: f64 = sum.iter().sum();
    sum.iter().map(|v| v / total).collect()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures: Vec<String> = Vec::new();
    let mut worst_shift: f64 = 0.0;
    for i in 0..100 {
        let clip;
        let mut notes = Vec::new();
        if i % 2 == 0 {
            for _ in 0..rng.gen_range(1..=3) {
                notes.push((rng.gen_range(48..80) as f64, rng.gen_range(0.3..1.0)));
            }
            clip = chord_clip(&notes, 4.0);
        } else {
            clip = noise_clip(&mut rng, 4.0);
        }
        let feats = extract_all(&clip).unwrap();
        for f in &feats {
            if f.bins() != f.kind.bins() {
                failures.push(format!("clip {i}: {} has {} bins", f.kind, f.bins()));
            }
            if f.values.iter().any(|v| !(*v >= 0.0)) {
                failures.push(format!("clip {i}: {} has a negative or NaN entry", f.kind));
            }
            if f.kind == FeatureKind::Mcqt {
                for row in f.values.rows() {
                    let zeros = row.iter().filter(|&&v| v == 0.0).count();
                    if zeros * 4 < 304 * 3 {
                        failures.push(format!("clip {i}: MCQT frame with only {zeros} zero bins"));
                        break;
                    }
                }
            }
        }
        let lfs = &feats[1].values;
        if decile_clip(lfs, 0.9) != *lfs {
            failures.push(format!("clip {i}: LFS is not a fixed point of decile clipping"));
        }
        let raw = Array2::from_shape_fn((20, 10), |_| rng.gen::<f64>());
        let once = decile_clip(&raw, 0.9);
        if decile_clip(&once, 0.9) != once {
            failures.push(format!("clip {i}: decile clipping is not idempotent"));
        }
        if !notes.is_empty() {
            let base = mean_chroma(&clip);
            let up: Vec<(f64, f64)> = notes.iter().map(|&(n, a)| (n + 1.0, a)).collect();
            let moved = mean_chroma(&chord_clip(&up, 4.0));
            for k in 0..12 {
                let d = (moved[(k + 1) % 12] - base[k]).abs();
                worst_shift = worst_shift.max(d);
            }
        }
    }
    if worst_shift > 0.1 {
        failures.push(format!("chroma transposition deviates by {worst_shift:.3} of the energy"));
    }
    outcome(
        failures.is_empty(),
        format!(
            "100 clips, worst transposition deviation {:.3}{}",
            worst_shift,
            failures.first().map(|f| format!("; first failure: {f}")).unwrap_or_default()
        ),
    )
}

fn criterion_6() -> Outcome {
    let ann: Vec<f64> = (0..20).map(|i| 6.0 + 2.0 * i as f64).collect();
    let dur = 60.0;
    let exact = f_measure(&ann, &ann, dur).f_measure;
    let shifted: Vec<f64> = ann.iter().map(|t| t + 0.1).collect();
    let off = f_measure(&shifted, &ann, dur).f_measure;
    let half: Vec<f64> = ann.iter().copied().step_by(2).collect();
    let h = f_measure(&half, &ann, dur);
    let mut noisy = ann.clone();
    noisy.extend([0.5, 1.7, 4.9, 57.5, 59.9]);
    noisy.sort_by(f64::total_cmp);
    let neutral = f_measure(&noisy, &ann, dur) == f_measure(&ann, &ann, dur);
    let pass = exact == 100.0
        && off == 0.0
        && (h.precision - 100.0).abs() <= 0.1
        && (h.recall - 50.0).abs() <= 0.1
        && (h.f_measure - 66.7).abs() <= 0.1
        && neutral;
    outcome(
        pass,
        format!(
            "exact {exact:.1}, +100 ms {off:.1}, half P/R/F {:.1}/{:.1}/{:.1}, edge neutral {neutral}",
            h.precision, h.recall, h.f_measure
        ),
    )
}

struct E2eRun {
    hmm_f: f64,
    threshold_f: f64,
    bundle_hash: String,
    csvs: Vec<(String, Vec<u8>)>,
    elapsed: Duration,
}

fn e2e_run(root: &Path) -> E2eRun {
    let start = Instant::now();
    let train = root.join("train");
    let heldout = root.join("heldout");
    let base = CorpusConfig {
        duple_share: 0.7,
        tempo_range: (80.0, 160.0),
        ..CorpusConfig::default()
    };
    generate_corpus(&train, &CorpusConfig { n_songs: 40, seed: E2E_SEED, ..base }).unwrap();
    generate_corpus(&heldout, &CorpusConfig { n_songs: 10, seed: E2E_SEED + 1, ..base }).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.train.seed = E2E_SEED;
    let rounds = run_dataset_eval(
        &[train, heldout],
        Some("heldout"),
        &cfg,
        &[Decoder::Hmm, Decoder::Threshold],
        Some(&root.join("bundles")),
    )
    .unwrap();
    let reports = root.join("reports");
    write_reports(&reports, &rounds, &cfg).unwrap();
    let mut csvs: Vec<(String, Vec<u8>)> = std::fs::read_dir(&reports)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    csvs.sort();
    let round = &rounds[0];
    E2eRun {
        hmm_f: round.reports[0].mean_f_measure(),
        threshold_f: round.reports[1].mean_f_measure(),
        bundle_hash: round.bundle_hash.clone().unwrap(),
        csvs,
        elapsed: start.elapsed(),
    }
}

fn golden_note(run: &E2eRun) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(GOLDEN_LOG);
    match std::fs::read_to_string(&path) {
        Ok(text) => {
            let hash = text
                .lines()
                .find_map(|l| l.strip_prefix("bundle_hash="))
                .unwrap_or("");
            if hash == run.bundle_hash {
                "bundle matches the golden calibration run".into()
            } else {
                "bundle differs from the golden calibration run".into()
            }
        }
        Err(_) => "no golden calibration log".into(),
    }
}

fn criterion_9() -> Outcome {
    let recipes = corpus_recipes(&CorpusConfig {
        n_songs: 20,
        seed: 99,
        ..CorpusConfig::default()
    });
    let mut hit_db = 0.0;
    let mut hit_beats = 0.0;
    for r in &recipes {
        let (clip, ann) = generate_song(r).unwrap();
        let odf = FeatureKind::Odf.extract(&clip).unwrap();
        let grid = track_tatums_or_fallback(&odf, clip.duration()).unwrap();
        hit_db += tatum_recall(&grid, &ann.downbeat_times, clip.duration());
        hit_beats += tatum_recall(&grid, ann.beat_times.as_deref().unwrap(), clip.duration());
    }
    let db = hit_db / recipes.len() as f64;
    let beats = hit_beats / recipes.len() as f64;
    outcome(
        db >= 99.0 && beats >= 99.0,
        format!("20 songs, downbeat recall {db:.2}%, beat recall {beats:.2}%"),
    )
}

fn name(n: u32) -> String {
    format!("acceptance::criterion_{n:02}")
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for n in 1..=10 {
            println!("{}: test", name(n));
        }
        return;
    }
    let filter = args.iter().find(|a| !a.starts_with('-')).cloned().unwrap_or_default();
    let selected = |n: u32| name(n).contains(&filter);

    let mut failed = Vec::new();
    let mut ran = 0;
    let mut report = |n: u32, title: &str, o: Outcome| {
        println!("criterion {n:>2} {} {title}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        ran += 1;
        if !o.pass {
            failed.push(n);
        }
    };
    let simple: [(u32, &str, fn() -> Outcome); 7] = [
        (1, "viterbi equals brute force", criterion_1),
        (2, "convolution oracle", criterion_2),
        (3, "gradient checks", criterion_3),
        (4, "periodicity path oracle", criterion_4),
        (5, "feature invariants", criterion_5),
        (6, "metric unit cases", criterion_6),
        (9, "tatum recall on synthetic songs", criterion_9),
    ];
    for (n, title, run) in simple {
        if selected(n) {
            report(n, title, run());
        }
    }

    if selected(7) || selected(8) || selected(10) {
        let dir = tempfile::tempdir().unwrap();
        let first = e2e_run(&dir.path().join("run1"));
        if selected(7) {
            report(
                7,
                "end-to-end synthetic regression",
                outcome(
                    first.hmm_f >= E2E_MIN_F && first.elapsed < Duration::from_secs(30 * 60),
                    format!(
                        "held-out mean F {:.2} (min {E2E_MIN_F}), {:.0} s, bundle {}, {}",
                        first.hmm_f,
                        first.elapsed.as_secs_f64(),
                        &first.bundle_hash[..12],
                        golden_note(&first)
                    ),
                ),
            );
        }
        if selected(8) {
            report(
                8,
                "hmm beats threshold baseline",
                outcome(
                    first.hmm_f > first.threshold_f,
                    format!("hmm {:.2} vs threshold(0.88) {:.2}", first.hmm_f, first.threshold_f),
                ),
            );
        }
        if selected(10) {
            let second = e2e_run(&dir.path().join("run2"));
            let same_csv = first.csvs == second.csvs && !first.csvs.is_empty();
            report(
                10,
                "determinism",
                outcome(
                    first.bundle_hash == second.bundle_hash && same_csv,
                    format!(
                        "bundle hashes {} / {}, {} score CSVs identical: {same_csv}",
                        &first.bundle_hash[..12],
                        &second.bundle_hash[..12],
                        first.csvs.len()
                    ),
                ),
            );
        }
        if std::env::var_os("DOWNBEAT_E2E_DUMP").is_some() {
            println!("bundle_hash={}", first.bundle_hash);
            println!("hmm_mean_f={:.6}", first.hmm_f);
            println!("threshold_mean_f={:.6}", first.threshold_f);
            for (name, bytes) in &first.csvs {
                println!("--- {name}");
                print!("{}", String::from_utf8_lossy(bytes));
            }
        }
    }

    if failed.is_empty() {
        println!("acceptance: {ran} criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
