use rand::Rng;

use super::Tensor3;

pub fn relu(x: &Tensor3) -> Tensor3 {
    x.map(|v| v.max(0.0))
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor3) -> Tensor3 {
    x.map(sigmoid_scalar)
}

/// Softmax over the map dimension, independently at every (t, v).
pub fn softmax(x: &Tensor3) -> Tensor3 {
    let l = x.dims()[2];
    let mut out = x.clone();
    for chunk in out.data_mut().chunks_exact_mut(l.max(1)) {
        let max = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in chunk.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in chunk.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Max pooling over non-overlapping `t2 × v2` blocks. Ragged edges are padded
/// with `f64::MIN`. Returns the pooled tensor and, per output cell, the index
/// of the winning input cell (first maximum on ties).
pub fn maxpool_with_argmax(x: &Tensor3, t2: usize, v2: usize) -> (Tensor3, Vec<usize>) {
    let [n, m, l] = x.dims();
    let out_dims = [n.div_ceil(t2), m.div_ceil(v2), l];
    let mut out = Tensor3::zeros(out_dims);
    let mut arg = vec![0; out.len()];
    for to in 0..out_dims[0] {
        for vo in 0..out_dims[1] {
            for k in 0..l {
                let mut best = f64::MIN;
                let mut best_i = usize::MAX;
                for t in to * t2..((to + 1) * t2).min(n) {
                    for v in vo * v2..((vo + 1) * v2).min(m) {
                        let i = x.index(t, v, k);
                        let val = x.data()[i];
                        if best_i == usize::MAX || val > best {
                            best = val;
                            best_i = i;
                        }
                    }
                }
                let oi = out.index(to, vo, k);
                out.data_mut()[oi] = best.max(f64::MIN);
                arg[oi] = best_i;
            }
        }
    }
    (out, arg)
}

pub fn maxpool(x: &Tensor3, t2: usize, v2: usize) -> Tensor3 {
    maxpool_with_argmax(x, t2, v2).0
}

/// Inverted dropout: each unit is zeroed with probability `rate`, survivors
/// are scaled by `1 / (1 - rate)`. Identity when not training.
pub fn dropout<R: Rng>(x: &Tensor3, rate: f64, rng: &mut R, training: bool) -> Tensor3 {
    if !training || rate == 0.0 {
        return x.clone();
    }
    let mask = dropout_mask(x.len(), rate, rng);
    let mut out = x.clone();
    for (v, s) in out.data_mut().iter_mut().zip(&mask) {
        *v *= s;
    }
    out
}

pub(crate) fn dropout_mask<R: Rng>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}
