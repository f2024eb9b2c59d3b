//! The four feature-specific networks, their training and likelihood fusion.

use std::borrow::Cow;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::manifest::Manifest;
use crate::nn::{load_weights, save_weights, LayerSpec, LossKind, Network, NetworkSpec, Op, Parameters, Sgd, Target, Tensor3};
use crate::sync::{window_tatums, NetworkInput, SUBDIVISIONS};

pub const ENSEMBLE_MANIFEST: &str = "ensemble.txt";
pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;
/// Gradients of a batch are summed in this many fixed chunks.
const REDUCTION_CHUNKS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Full,
    /// Every hidden filter count divided by 10.
    Reduced,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Full => "full",
            Preset::Reduced => "reduced",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(Preset::Full),
            "reduced" => Ok(Preset::Reduced),
            other => Err(Error::invalid(format!("unknown preset `{other}`"))),
        }
    }
}

/// Network name used in file names and reports.
pub fn network_name(kind: FeatureKind) -> &'static str {
    match kind {
        FeatureKind::Mcqt => "mcnn",
        FeatureKind::Odf => "rcnn",
        FeatureKind::Chroma => "hcnn",
        FeatureKind::Lfs => "bcnn",
    }
}

/// Rhythm and bass networks predict all 17 covered tatums at once.
pub fn is_multi_label(kind: FeatureKind) -> bool {
    matches!(kind, FeatureKind::Odf | FeatureKind::Lfs)
}

pub fn input_dims(kind: FeatureKind) -> [usize; 3] {
    [window_tatums(kind) * SUBDIVISIONS, kind.bins(), 1]
}

pub fn default_spec(kind: FeatureKind, preset: Preset) -> NetworkSpec {
    let div = match preset {
        Preset::Full => 1,
        Preset::Reduced => 10,
    };
    let (a, b, c) = (30 / div, 60 / div, 800 / div);
    let drop = Op::Dropout(0.5);
    let layers = match kind {
        FeatureKind::Mcqt => vec![
            LayerSpec::new([46, 96, 1, a], vec![Op::Relu, Op::MaxPool(2, 209)]),
            LayerSpec::new([6, 1, a, b], vec![Op::Relu, Op::MaxPool(3, 1)]),
            LayerSpec::new([5, 1, b, c], vec![Op::Relu, drop]),
            LayerSpec::new([1, 1, c, 2], vec![Op::Softmax]),
        ],
        FeatureKind::Odf => vec![
            LayerSpec::new([40, 3, 1, a], vec![Op::Relu, Op::MaxPool(2, 1)]),
            LayerSpec::new([6, 1, a, b], vec![Op::Relu, Op::MaxPool(3, 1)]),
            LayerSpec::new([6, 1, b, c], vec![Op::Relu, drop]),
            LayerSpec::new([1, 1, c, 17], vec![Op::Sigmoid]),
        ],
        FeatureKind::Chroma => vec![
            LayerSpec::new([6, 3, 1, a], vec![Op::Relu, Op::MaxPool(2, 2)]),
            LayerSpec::new([6, 3, a, b], vec![Op::Relu, Op::MaxPool(3, 3)]),
            LayerSpec::new([5, 1, b, c], vec![Op::Relu, drop]),
            LayerSpec::new([1, 1, c, 2], vec![Op::Softmax]),
        ],
        FeatureKind::Lfs => vec![
            LayerSpec::new([6, 3, 1, a], vec![Op::Relu, Op::MaxPool(2, 2)]),
            LayerSpec::new([8, 4, a, b], vec![Op::Relu, Op::MaxPool(3, 1)]),
            LayerSpec::new([11, 1, b, c], vec![Op::Relu, drop]),
            LayerSpec::new([1, 1, c, 17], vec![Op::Sigmoid]),
        ],
    };
    let loss = if is_multi_label(kind) {
        LossKind::Euclidean
    } else {
        LossKind::Log
    };
    NetworkSpec::new(input_dims(kind), layers, loss).expect("default specs are consistent")
}

/// Specs in the fixed member order (MCNN, RCNN, HCNN, BCNN).
pub fn default_specs(preset: Preset) -> Vec<(FeatureKind, NetworkSpec)> {
    MEMBER_ORDER.iter().map(|&k| (k, default_spec(k, preset))).collect()
}

pub const MEMBER_ORDER: [FeatureKind; 4] = [
    FeatureKind::Mcqt,
    FeatureKind::Odf,
    FeatureKind::Chroma,
    FeatureKind::Lfs,
];

pub fn spec_hash(spec: &NetworkSpec) -> String {
    hex::encode(Sha256::digest(spec.canonical().as_bytes()))
}

/// Circular shift of a chroma window by `shift` pitch classes.
pub fn shift_chroma(window: &Tensor3, shift: usize) -> Result<Tensor3> {
    let [n, m, l] = window.dims();
    if m != 12 || l != 1 {
        return Err(Error::Shape(format!("chroma window must be N×12×1, got {:?}", window.dims())));
    }
    let mut out = Tensor3::zeros(window.dims());
    for t in 0..n {
        for v in 0..12 {
            out.set(t, (v + shift) % 12, 0, window.get(t, v, 0));
        }
    }
    Ok(out)
}

/// Each input followed by its 11 nontrivial transpositions.
pub fn augment_chroma_shifts(inputs: &[NetworkInput]) -> Result<Vec<NetworkInput>> {
    let mut out = Vec::with_capacity(inputs.len() * 12);
    for input in inputs {
        for s in 0..12 {
            out.push(NetworkInput {
                window: shift_chroma(&input.window, s)?,
                ..input.clone()
            });
        }
    }
    Ok(out)
}

/// Indices kept when the majority class (0 or 1) is subsampled without
/// replacement to the minority count; ascending.
pub fn balance_indices<R: Rng>(labels: &[usize], rng: &mut R) -> Result<Vec<usize>> {
    let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &c) in labels.iter().enumerate() {
        if c > 1 {
            return Err(Error::invalid(format!("class {c} in a binary problem")));
        }
        classes[c].push(i);
    }
    let (minor, major) = if classes[0].len() <= classes[1].len() { (0, 1) } else { (1, 0) };
    if classes[minor].is_empty() {
        return Err(Error::invalid(format!("class {minor} has no examples")));
    }
    let mut keep: Vec<usize> = sample(rng, classes[major].len(), classes[minor].len())
        .into_iter()
        .map(|k| classes[major][k])
        .collect();
    keep.extend_from_slice(&classes[minor]);
    keep.sort_unstable();
    Ok(keep)
}

/// Subsamples the majority class (without replacement) down to the minority
/// count; original order is kept.
pub fn balance_classes<R: Rng>(inputs: &[NetworkInput], rng: &mut R) -> Result<Vec<NetworkInput>> {
    let labels = inputs
        .iter()
        .map(|input| match input.label {
            Some(Target::Class(c)) => Ok(c),
            _ => Err(Error::invalid("balancing needs class labels")),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(balance_indices(&labels, rng)?
        .into_iter()
        .map(|i| inputs[i].clone())
        .collect())
}

/// Indexed training examples, possibly built on demand.
pub trait ExampleSource: Sync {
    fn len(&self) -> usize;
    fn example(&self, i: usize) -> Result<(Cow<'_, Tensor3>, Cow<'_, Target>)>;
}

impl ExampleSource for [NetworkInput] {
    fn len(&self) -> usize {
        <[NetworkInput]>::len(self)
    }

    fn example(&self, i: usize) -> Result<(Cow<'_, Tensor3>, Cow<'_, Target>)> {
        let input = &self[i];
        let label = input
            .label
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("example {i} has no label")))?;
        Ok((Cow::Borrowed(&input.window), Cow::Borrowed(label)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.01,
            momentum: 0.9,
            batch: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
}

fn check_labels(spec: &NetworkSpec, data: &[NetworkInput]) -> Result<()> {
    let out = spec.output_len();
    for input in data {
        let ok = match (&input.label, spec.loss) {
            (Some(Target::Class(c)), LossKind::Log) => *c < out,
            (Some(Target::Vector(v)), LossKind::Euclidean) => v.len() == out,
            _ => false,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "label {:?} does not fit a {}-output {} network",
                input.label, out, spec.loss
            )));
        }
        if input.window.dims() != spec.input_dims {
            return Err(Error::Shape(format!(
                "window {:?} for a network expecting {:?}",
                input.window.dims(),
                spec.input_dims
            )));
        }
    }
    Ok(())
}

/// Mini-batch SGD with momentum. Deterministic for a given seed regardless of
/// the number of worker threads.
pub fn train_network(spec: &NetworkSpec, data: &[NetworkInput], cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_labels(spec, data)?;
    train_from_source(spec, data, cfg)
}

/// [`train_network`] over examples that may be built lazily.
pub fn train_from_source<S: ExampleSource + ?Sized>(spec: &NetworkSpec, data: &S, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.len() == 0 {
        return Err(Error::invalid("no training examples"));
    }
    if cfg.batch == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = Parameters::init(spec, &mut rng);
    let mut net = Network::new(spec.clone(), params)?;
    let mut opt = Sgd::new(&net.params, cfg.lr, cfg.momentum)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut last_finite = f64::NAN;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sample_loss = vec![0.0; data.len()];
        for batch in order.chunks(cfg.batch) {
            let seeds: Vec<u64> = batch.iter().map(|_| rng.gen()).collect();
            let engine = net.engine()?;
            let chunk = batch.len().div_ceil(REDUCTION_CHUNKS);
            let partial: Vec<(Vec<f64>, Parameters)> = batch
                .par_chunks(chunk)
                .zip(seeds.par_chunks(chunk))
                .map(|(idx, sd)| -> Result<(Vec<f64>, Parameters)> {
                    let mut acc = Parameters::zeros(spec);
                    let mut loss = Vec::with_capacity(idx.len());
                    for (&i, &s) in idx.iter().zip(sd) {
                        let (x, label) = data.example(i)?;
                        let (l, g) = engine.gradients(&x, &label, Some(s), 1.0)?;
                        loss.push(l);
                        acc.add_scaled(&g, 1.0);
                    }
                    Ok((loss, acc))
                })
                .collect::<Result<_>>()?;
            drop(engine);
            let mut grads = Parameters::zeros(spec);
            let batch_losses = partial.iter().flat_map(|(l, _)| l);
            for (&i, &l) in batch.iter().zip(batch_losses) {
                sample_loss[i] = l;
            }
            for (_, g) in &partial {
                grads.add_scaled(g, 1.0);
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(&mut net.params, &grads);
        }
        // Summed in data order so the value does not depend on the shuffle.
        let mean = sample_loss.iter().sum::<f64>() / data.len() as f64;
        if !mean.is_finite() || !net.params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                last_finite_loss: last_finite,
            });
        }
        log::debug!("epoch {epoch}: loss {mean:.6}");
        last_finite = mean;
        losses.push(mean);
    }
    Ok(TrainOutcome { network: net, losses })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodSeries {
    pub values: Vec<f64>,
    pub source: String,
}

/// Per-tatum downbeat likelihood. Two-way heads give the downbeat-class
/// probability of each window's centre tatum; multi-label heads are averaged
/// over every window covering a tatum.
pub fn infer_likelihood(net: &Network, inputs: &[NetworkInput], tatums: usize, source: &str) -> Result<LikelihoodSeries> {
    let windows: Vec<Tensor3> = inputs.iter().map(|i| i.window.clone()).collect();
    let outputs = net.forward_batch(&windows)?;
    likelihood_from_outputs(inputs, &outputs, tatums, source)
}

pub fn likelihood_from_outputs(
    inputs: &[NetworkInput],
    outputs: &[Tensor3],
    tatums: usize,
    source: &str,
) -> Result<LikelihoodSeries> {
    let mut sum = vec![0.0; tatums];
    let mut count = vec![0usize; tatums];
    for (input, out) in inputs.iter().zip(outputs) {
        let v = out.data();
        if v.len() == 2 {
            if input.center_tatum >= tatums {
                return Err(Error::Shape(format!("centre tatum {} of {tatums}", input.center_tatum)));
            }
            sum[input.center_tatum] += v[1];
            count[input.center_tatum] += 1;
        } else {
            if v.len() != input.covered_tatums.len() {
                return Err(Error::Shape(format!(
                    "{} outputs for a window covering {} tatums",
                    v.len(),
                    input.covered_tatums.len()
                )));
            }
            for (&t, &p) in input.covered_tatums.iter().zip(v) {
                if t >= tatums {
                    return Err(Error::Shape(format!("covered tatum {t} of {tatums}")));
                }
                sum[t] += p;
                count[t] += 1;
            }
        }
    }
    Ok(LikelihoodSeries {
        values: sum
            .iter()
            .zip(&count)
            .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect(),
        source: source.to_string(),
    })
}

/// Elementwise mean.
pub fn fuse_average(series: &[LikelihoodSeries]) -> Result<LikelihoodSeries> {
    let first = series.first().ok_or_else(|| Error::invalid("nothing to fuse"))?;
    for (i, s) in series.iter().enumerate() {
        if s.values.len() != first.values.len() {
            return Err(Error::Shape(format!(
                "likelihood `{}` has {} values, `{}` has {}",
                s.source,
                s.values.len(),
                first.source,
                first.values.len()
            )));
        }
        if series[..i].iter().any(|o| o.source == s.source) {
            return Err(Error::invalid(format!("likelihood `{}` fused twice", s.source)));
        }
    }
    let n = series.len() as f64;
    let values = (0..first.values.len())
        .map(|k| series.iter().map(|s| s.values[k]).sum::<f64>() / n)
        .collect();
    Ok(LikelihoodSeries {
        values,
        source: "fused".to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub kind: FeatureKind,
    pub network: Network,
    pub seed: u64,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<Member>,
    pub preset: Preset,
    pub config: TrainConfig,
    pub data_fingerprint: String,
}

impl EnsembleModel {
    pub fn member(&self, kind: FeatureKind) -> Option<&Member> {
        self.members.iter().find(|m| m.kind == kind)
    }

    pub fn manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.set("format_version", ENSEMBLE_FORMAT_VERSION)
            .set("preset", self.preset)
            .set(
                "members",
                self.members.iter().map(|x| x.kind.name()).collect::<Vec<_>>().join(","),
            )
            .set("epochs", self.config.epochs)
            .set("lr", self.config.lr)
            .set("momentum", self.config.momentum)
            .set("batch", self.config.batch)
            .set("seed", self.config.seed)
            .set("data_fingerprint", &self.data_fingerprint);
        for member in &self.members {
            let name = member.kind.name();
            m.set(format!("{name}.weights"), format!("{}.weights", network_name(member.kind)))
                .set(format!("{name}.spec_hash"), spec_hash(&member.network.spec))
                .set(format!("{name}.seed"), member.seed);
        }
        m
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for member in &self.members {
            let path = dir.join(format!("{}.weights", network_name(member.kind)));
            save_weights(&path, &member.network, member.seed)?;
        }
        self.manifest().write(&dir.join(ENSEMBLE_MANIFEST))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(ENSEMBLE_MANIFEST);
        if !path.exists() {
            return Err(Error::Missing(path));
        }
        let m = Manifest::read(&path)?;
        let version: u32 = m.parse_value("format_version", &path)?;
        if version != ENSEMBLE_FORMAT_VERSION {
            return Err(Error::malformed(&path, format!("unsupported format_version {version}")));
        }
        let preset: Preset = m
            .require("preset", &path)?
            .parse()
            .map_err(|e: Error| Error::malformed(&path, e.to_string()))?;
        let config = TrainConfig {
            epochs: m.parse_value("epochs", &path)?,
            lr: m.parse_value("lr", &path)?,
            momentum: m.parse_value("momentum", &path)?,
            batch: m.parse_value("batch", &path)?,
            seed: m.parse_value("seed", &path)?,
        };
        let mut members = Vec::new();
        for name in m.require("members", &path)?.split(',').filter(|s| !s.is_empty()) {
            let kind: FeatureKind = name.parse().map_err(|e: Error| Error::malformed(&path, e.to_string()))?;
            let file = dir.join(m.require(&format!("{name}.weights"), &path)?);
            let (network, seed) = load_weights(&file)?;
            if spec_hash(&network.spec) != m.require(&format!("{name}.spec_hash"), &path)? {
                return Err(Error::malformed(&file, "network spec does not match the ensemble manifest"));
            }
            members.push(Member {
                kind,
                network,
                seed,
                losses: Vec::new(),
            });
        }
        Ok(Self {
            members,
            preset,
            config,
            data_fingerprint: m.require("data_fingerprint", &path)?.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sync::label_windows;

    fn input(window: Tensor3, center: usize, label: Option<Target>) -> NetworkInput {
        NetworkInput {
            window,
            center_tatum: center,
            covered_tatums: vec![center],
            label,
        }
    }

    #[test]
    fn default_shapes() {
        for preset in [Preset::Full, Preset::Reduced] {
            for (kind, spec) in default_specs(preset) {
                let out = spec.output_dims().unwrap();
                let want = if is_multi_label(kind) { 17 } else { 2 };
                assert_eq!(out, [1, 1, want]);
                let dims = spec.layer_dims().unwrap();
                assert_eq!(dims[2][..2], [1, 1]);
            }
        }
        let mcnn = default_spec(FeatureKind::Mcqt, Preset::Full);
        assert_eq!(mcnn.layers[0].conv_output_dims([85, 304, 1]).unwrap(), [40, 209, 30]);
        assert_eq!(mcnn.layer_dims().unwrap()[0], [20, 1, 30]);
        assert_eq!(default_spec(FeatureKind::Odf, Preset::Full).layer_dims().unwrap()[0], [23, 1, 30]);
        assert_eq!(default_spec(FeatureKind::Chroma, Preset::Full).layer_dims().unwrap()[0], [20, 5, 30]);
        assert_eq!(default_spec(FeatureKind::Lfs, Preset::Full).layer_dims().unwrap()[1], [11, 1, 60]);
    }

    #[test]
    fn chroma_shifts() {
        let w = Tensor3::from_vec([2, 12, 1], (0..24).map(f64::from).collect()).unwrap();
        assert_eq!(shift_chroma(&w, 0).unwrap(), w);
        for s in 0..12 {
            assert_eq!(shift_chroma(&shift_chroma(&w, s).unwrap(), 12 - s).unwrap(), w);
        }
        let inputs = vec![input(w.clone(), 0, None), input(w, 1, None)];
        assert_eq!(augment_chroma_shifts(&inputs).unwrap().len(), 24);
        assert!(shift_chroma(&Tensor3::zeros([2, 10, 1]), 1).is_err());
    }

    #[test]
    fn balancing() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let inputs: Vec<NetworkInput> = (0..400)
            .map(|i| input(Tensor3::zeros([1, 1, 1]), i, Some(Target::Class(usize::from(i % 4 == 0)))))
            .collect();
        let b = balance_classes(&inputs, &mut rng).unwrap();
        let pos = b.iter().filter(|x| x.label == Some(Target::Class(1))).count();
        assert_eq!((b.len(), pos), (200, 100));
        let balanced = balance_classes(&b, &mut rng).unwrap();
        assert_eq!(balanced, b);
        let none: Vec<NetworkInput> = inputs.iter().filter(|x| x.label == Some(Target::Class(0))).cloned().collect();
        assert!(balance_classes(&none, &mut rng).is_err());
    }

    #[test]
    fn likelihood_averaging() {
        let mk = |covered: Vec<usize>| NetworkInput {
            window: Tensor3::zeros([1, 1, 1]),
            center_tatum: covered[1],
            covered_tatums: covered,
            label: None,
        };
        let inputs = vec![mk(vec![0, 1, 2]), mk(vec![1, 2, 3]), mk(vec![2, 3, 4])];
        let outs: Vec<Tensor3> = [0.2, 0.4, 0.6]
            .iter()
            .map(|&v| Tensor3::filled([1, 1, 3], v))
            .collect();
        let s = likelihood_from_outputs(&inputs, &outs, 5, "x").unwrap();
        assert!((s.values[2] - 0.4).abs() < 1e-15);
        let scalar: Vec<Tensor3> = (0..3).map(|_| Tensor3::from_vec([1, 1, 2], vec![0.3, 0.7]).unwrap()).collect();
        let s = likelihood_from_outputs(&inputs, &scalar, 5, "y").unwrap();
        assert_eq!(s.values.len(), 5);
        assert_eq!(s.values[1], 0.7);
    }

    #[test]
    fn fusion() {
        let series: Vec<LikelihoodSeries> = [0.2, 0.4, 0.6, 0.8]
            .iter()
            .enumerate()
            .map(|(i, &v)| LikelihoodSeries {
                values: vec![v; 6],
                source: i.to_string(),
            })
            .collect();
        let f = fuse_average(&series).unwrap();
        assert!(f.values.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        assert_eq!(fuse_average(&series[..1]).unwrap().values, series[0].values);
        let mut bad = series.clone();
        bad[1].values.pop();
        assert!(fuse_average(&bad).is_err());
    }

    fn blob_data(n: usize, seed: u64) -> Vec<NetworkInput> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs: Vec<NetworkInput> = (0..n)
            .map(|i| {
                let c = (i % 2) as f64;
                let data = (0..20).map(|_| c * 0.6 + rng.gen::<f64>() * 0.4).collect();
                input(Tensor3::from_vec([5, 4, 1], data).unwrap(), i, None)
            })
            .collect();
        let pos = (0..n).filter(|i| i % 2 == 1).collect();
        label_windows(&mut inputs, &pos, false);
        inputs
    }

    fn blob_spec_with(ops: Vec<Op>) -> NetworkSpec {
        NetworkSpec::new(
            [5, 4, 1],
            vec![
                LayerSpec::new([3, 2, 1, 4], ops),
                LayerSpec::new([3, 1, 4, 2], vec![Op::Softmax]),
            ],
            LossKind::Log,
        )
        .unwrap()
    }

    fn blob_spec() -> NetworkSpec {
        blob_spec_with(vec![Op::Relu, Op::MaxPool(1, 3), Op::Dropout(0.2)])
    }

    #[test]
    fn training_progresses_and_is_deterministic() {
        let data = blob_data(64, 1);
        let cfg = TrainConfig {
            epochs: 20,
            lr: 0.05,
            batch: 8,
            seed: 3,
            ..Default::default()
        };
        let a = train_network(&blob_spec(), &data, &cfg).unwrap();
        assert!(a.losses[19] < a.losses[0], "{:?}", a.losses);
        let b = train_network(&blob_spec(), &data, &cfg).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = blob_data(16, 2);
        let cfg = TrainConfig {
            epochs: 3,
            lr: 0.0,
            batch: 4,
            seed: 5,
            ..Default::default()
        };
        let spec = blob_spec_with(vec![Op::Relu, Op::MaxPool(1, 3)]);
        let out = train_network(&spec, &data, &cfg).unwrap();
        let init = Parameters::init(&spec, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(out.network.params, init);
        assert!(out.losses.iter().all(|&l| l == out.losses[0]));
    }

    #[test]
    fn wrong_label_type_rejected() {
        let mut data = blob_data(4, 0);
        data[0].label = Some(Target::Vector(vec![0.0; 2]));
        assert!(train_network(&blob_spec(), &data, &TrainConfig::default()).is_err());
    }
}
