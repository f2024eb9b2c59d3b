use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::Target;
use super::{Network, Tensor3};
use crate::error::Result;

/// Denominator floor for relative errors.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Parameters whose perturbation changed a ReLU sign or a pooling winner.
    pub skipped: usize,
    pub max_rel_error: f64,
    /// Worst relative error per layer.
    pub per_layer: Vec<f64>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Weights sampled per layer (all of them when the layer is smaller).
    pub weights_per_layer: usize,
    pub biases_per_layer: usize,
    pub dropout_seed: Option<u64>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            weights_per_layer: 40,
            biases_per_layer: 40,
            dropout_seed: None,
            seed: 0,
        }
    }
}

fn pick(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if k >= n {
        (0..n).collect()
    } else {
        let mut v = sample(rng, n, k).into_vec();
        v.sort_unstable();
        v
    }
}

fn param_mut(net: &mut Network, layer: usize, is_weight: bool, i: usize) -> &mut f64 {
    let lp = &mut net.params.layers[layer];
    if is_weight {
        &mut lp.weights[i]
    } else {
        &mut lp.biases[i]
    }
}

/// Compares backprop gradients with central differences on sampled parameters.
pub fn gradient_check(net: &Network, x: &Tensor3, target: &Target, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let (_, grads) = net.engine()?.gradients(x, target, cfg.dropout_seed, 1.0)?;
    let (_, base_sig) = net.engine()?.loss(x, target, cfg.dropout_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        per_layer: vec![0.0; net.spec.layers.len()],
        ..Default::default()
    };
    let mut probe = net.clone();
    for k in 0..net.spec.layers.len() {
        let nw = net.params.layers[k].weights.len();
        let nb = net.params.layers[k].biases.len();
        let mut targets: Vec<(bool, usize)> = pick(nw, cfg.weights_per_layer, &mut rng)
            .into_iter()
            .map(|i| (true, i))
            .collect();
        targets.extend(pick(nb, cfg.biases_per_layer, &mut rng).into_iter().map(|i| (false, i)));
        for (is_weight, i) in targets {
            let original = *param_mut(&mut probe, k, is_weight, i);
            *param_mut(&mut probe, k, is_weight, i) = original + cfg.eps;
            let (lp, sp) = probe.engine()?.loss(x, target, cfg.dropout_seed)?;
            *param_mut(&mut probe, k, is_weight, i) = original - cfg.eps;
            let (lm, sm) = probe.engine()?.loss(x, target, cfg.dropout_seed)?;
            *param_mut(&mut probe, k, is_weight, i) = original;
            if sp != base_sig || sm != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * cfg.eps);
            let lg = &grads.layers[k];
            let analytic = if is_weight { lg.weights[i] } else { lg.biases[i] };
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            report.per_layer[k] = report.per_layer[k].max(err);
            report.max_rel_error = report.max_rel_error.max(err);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{LayerSpec, LossKind, NetworkSpec, Op};

    #[test]
    fn toy_networks_pass_every_parameter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor3::from_vec([7, 5, 2], (0..70).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect()).unwrap();
        for (loss, head, out, target) in [
            (LossKind::Log, Op::Softmax, 2, Target::Class(0)),
            (LossKind::Euclidean, Op::Sigmoid, 3, Target::Vector(vec![0.0, 1.0, 0.5])),
        ] {
            let spec = NetworkSpec::new(
                [7, 5, 2],
                vec![
                    LayerSpec::new([3, 2, 2, 4], vec![Op::Relu, Op::MaxPool(2, 2), Op::Dropout(0.3)]),
                    LayerSpec::new([3, 2, 4, out], vec![head]),
                ],
                loss,
            )
            .unwrap();
            let net = Network::init(spec, 4).unwrap();
            let cfg = GradCheckConfig {
                weights_per_layer: usize::MAX,
                biases_per_layer: usize::MAX,
                dropout_seed: Some(17),
                ..Default::default()
            };
            let r = gradient_check(&net, &x, &target, &cfg).unwrap();
            assert!(r.checked > 50, "{r:?}");
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }
}
