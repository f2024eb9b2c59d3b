use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::conv::{self, ConvGrads, FftCache, FftCorrelator};
use super::loss::{loss_and_grad, Target};
use super::ops;
use super::spec::{NetworkSpec, Op};
use super::Tensor3;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `[t][v][l][l']` order.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Weights and biases for every layer of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub layers: Vec<LayerParams>,
}

impl Parameters {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: vec![0.0; l.weight_len()],
                    biases: vec![0.0; l.conv[3]],
                })
                .collect(),
        }
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)), biases zero.
    pub fn init<R: Rng>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let mut p = Self::zeros(spec);
        for (layer, lp) in spec.layers.iter().zip(&mut p.layers) {
            let [t1, v1, l, n1] = layer.conv;
            let fan_in = (t1 * v1 * l) as f64;
            let fan_out = (t1 * v1 * n1) as f64;
            let bound = (6.0 / (fan_in + fan_out)).sqrt();
            for w in &mut lp.weights {
                *w = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::Shape(format!(
                "{} parameter layers for a {}-layer network",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (k, (layer, lp)) in spec.layers.iter().zip(&self.layers).enumerate() {
            if lp.weights.len() != layer.weight_len() || lp.biases.len() != layer.conv[3] {
                return Err(Error::Shape(format!("layer {k} parameters do not match {layer}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        self.values_mut().for_each(|v| *v *= a);
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, other: &Parameters, a: f64) {
        for (x, y) in self.values_mut().zip(other.values()) {
            *x += a * y;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: Parameters,
}

enum ConvEngine {
    Direct,
    Fft(FftCorrelator),
}

enum OpCache {
    Relu(Tensor3),
    Sigmoid(Tensor3),
    Pool { input_dims: [usize; 3], argmax: Vec<usize> },
    Softmax(Tensor3),
    Dropout(Option<Vec<f64>>),
}

struct LayerTrace {
    input: Tensor3,
    fft: Option<FftCache>,
    ops: Vec<OpCache>,
}

/// Everything the backward pass needs from one forward pass.
pub struct Trace {
    layers: Vec<LayerTrace>,
    pub output: Tensor3,
}

impl Trace {
    /// Discrete decisions taken by the forward pass (ReLU signs and pooling
    /// winners). Two passes with equal signatures lie on the same smooth piece.
    pub fn signature(&self) -> Vec<usize> {
        let mut sig = Vec::new();
        for layer in &self.layers {
            for op in &layer.ops {
                match op {
                    OpCache::Relu(y) => sig.extend(y.data().iter().map(|&v| usize::from(v > 0.0))),
                    OpCache::Pool { argmax, .. } => sig.extend_from_slice(argmax),
                    _ => {}
                }
            }
        }
        sig
    }
}

impl Network {
    pub fn new(spec: NetworkSpec, params: Parameters) -> Result<Self> {
        spec.validate()?;
        params.check(&spec)?;
        Ok(Self { spec, params })
    }

    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = Parameters::init(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { spec, params })
    }

    /// Precomputes per-layer convolution plans; reuse it across a batch.
    pub fn engine(&self) -> Result<Engine<'_>> {
        Engine::new(self)
    }

    /// Inference-mode forward pass (dropout off).
    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        Ok(self.engine()?.forward_trace(x, None)?.output)
    }

    /// Inference on many inputs in parallel.
    pub fn forward_batch(&self, xs: &[Tensor3]) -> Result<Vec<Tensor3>> {
        let engine = self.engine()?;
        xs.par_iter()
            .map(|x| engine.forward_trace(x, None).map(|t| t.output))
            .collect()
    }

    /// Loss and exact gradients for one example. `dropout_seed` of `None`
    /// disables dropout.
    pub fn backward(&self, x: &Tensor3, target: &Target, dropout_seed: Option<u64>) -> Result<(f64, Parameters)> {
        self.engine()?.gradients(x, target, dropout_seed, 1.0)
    }
}

pub struct Engine<'a> {
    net: &'a Network,
    convs: Vec<ConvEngine>,
}

impl<'a> Engine<'a> {
    fn new(net: &'a Network) -> Result<Self> {
        net.params.check(&net.spec)?;
        let mut dims = net.spec.input_dims;
        let mut convs = Vec::new();
        for (layer, lp) in net.spec.layers.iter().zip(&net.params.layers) {
            convs.push(if conv::uses_fft(layer.conv) {
                ConvEngine::Fft(FftCorrelator::new(dims, &lp.weights, layer.conv))
            } else {
                ConvEngine::Direct
            });
            dims = layer.output_dims(dims)?;
        }
        Ok(Self { net, convs })
    }

    pub fn forward_trace(&self, x: &Tensor3, dropout_seed: Option<u64>) -> Result<Trace> {
        if x.dims() != self.net.spec.input_dims {
            return Err(Error::Shape(format!(
                "input {:?} for a network expecting {:?}",
                x.dims(),
                self.net.spec.input_dims
            )));
        }
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let mut cur = x.clone();
        let mut layers = Vec::with_capacity(self.convs.len());
        for (k, layer) in self.net.spec.layers.iter().enumerate() {
            let lp = &self.net.params.layers[k];
            let input = cur;
            let (mut z, fft) = match &self.convs[k] {
                ConvEngine::Fft(plan) => {
                    let (z, cache) = plan.forward(&input, &lp.biases);
                    (z, Some(cache))
                }
                ConvEngine::Direct => {
                    let out = conv::check_shapes(input.dims(), &lp.weights, &lp.biases, layer.conv)?;
                    (conv::direct_forward(&input, &lp.weights, &lp.biases, layer.conv, out), None)
                }
            };
            let mut caches = Vec::with_capacity(layer.ops.len());
            for op in &layer.ops {
                match *op {
                    Op::Relu => {
                        z = ops::relu(&z);
                        caches.push(OpCache::Relu(z.clone()));
                    }
                    Op::Sigmoid => {
                        z = ops::sigmoid(&z);
                        caches.push(OpCache::Sigmoid(z.clone()));
                    }
                    Op::Softmax => {
                        z = ops::softmax(&z);
                        caches.push(OpCache::Softmax(z.clone()));
                    }
                    Op::MaxPool(t2, v2) => {
                        let input_dims = z.dims();
                        let (y, argmax) = ops::maxpool_with_argmax(&z, t2, v2);
                        z = y;
                        caches.push(OpCache::Pool { input_dims, argmax });
                    }
                    Op::Dropout(rate) => match rng.as_mut() {
                        Some(r) if rate > 0.0 => {
                            let mask = ops::dropout_mask(z.len(), rate, r);
                            for (v, s) in z.data_mut().iter_mut().zip(&mask) {
                                *v *= s;
                            }
                            caches.push(OpCache::Dropout(Some(mask)));
                        }
                        _ => caches.push(OpCache::Dropout(None)),
                    },
                }
            }
            layers.push(LayerTrace {
                input,
                fft,
                ops: caches,
            });
            cur = z;
        }
        Ok(Trace { layers, output: cur })
    }

    /// Reverse pass from `d_out` (gradient of the loss w.r.t. the output).
    pub fn backward(&self, trace: &Trace, d_out: Tensor3) -> Parameters {
        let mut grads = Parameters::zeros(&self.net.spec);
        let mut g = d_out;
        for k in (0..trace.layers.len()).rev() {
            let lt = &trace.layers[k];
            for op in lt.ops.iter().rev() {
                match op {
                    OpCache::Relu(y) => {
                        for (gi, &yi) in g.data_mut().iter_mut().zip(y.data()) {
                            if yi <= 0.0 {
                                *gi = 0.0;
                            }
                        }
                    }
                    OpCache::Sigmoid(y) => {
                        for (gi, &yi) in g.data_mut().iter_mut().zip(y.data()) {
                            *gi *= yi * (1.0 - yi);
                        }
                    }
                    OpCache::Softmax(y) => {
                        let l = y.dims()[2];
                        for (gc, yc) in g.data_mut().chunks_exact_mut(l).zip(y.data().chunks_exact(l)) {
                            let s: f64 = gc.iter().zip(yc).map(|(a, b)| a * b).sum();
                            for (gi, &yi) in gc.iter_mut().zip(yc) {
                                *gi = yi * (*gi - s);
                            }
                        }
                    }
                    OpCache::Pool { input_dims, argmax } => {
                        let mut up = Tensor3::zeros(*input_dims);
                        for (&src, &gi) in argmax.iter().zip(g.data()) {
                            up.data_mut()[src] += gi;
                        }
                        g = up;
                    }
                    OpCache::Dropout(Some(mask)) => {
                        for (gi, s) in g.data_mut().iter_mut().zip(mask) {
                            *gi *= s;
                        }
                    }
                    OpCache::Dropout(None) => {}
                }
            }
            let shape = self.net.spec.layers[k].conv;
            let need_dx = k > 0;
            let ConvGrads { dw, db, dx } = match (&self.convs[k], &lt.fft) {
                (ConvEngine::Fft(plan), Some(cache)) => plan.backward(cache, &g, need_dx),
                _ => conv::direct_backward(&lt.input, &self.net.params.layers[k].weights, shape, &g, need_dx),
            };
            grads.layers[k].weights = dw;
            grads.layers[k].biases = db;
            if let Some(dx) = dx {
                g = dx;
            }
        }
        grads
    }

    /// Loss (multiplied by `loss_scale`) and its parameter gradients.
    pub fn gradients(
        &self,
        x: &Tensor3,
        target: &Target,
        dropout_seed: Option<u64>,
        loss_scale: f64,
    ) -> Result<(f64, Parameters)> {
        let trace = self.forward_trace(x, dropout_seed)?;
        let (loss, mut dpred) = loss_and_grad(trace.output.data(), target)?;
        dpred.iter_mut().for_each(|v| *v *= loss_scale);
        let d_out = Tensor3::from_vec(trace.output.dims(), dpred)?;
        Ok((loss * loss_scale, self.backward(&trace, d_out)))
    }

    /// Loss only, at the same operating point as `gradients`.
    pub fn loss(&self, x: &Tensor3, target: &Target, dropout_seed: Option<u64>) -> Result<(f64, Vec<usize>)> {
        let trace = self.forward_trace(x, dropout_seed)?;
        let (loss, _) = loss_and_grad(trace.output.data(), target)?;
        Ok((loss, trace.signature()))
    }
}
