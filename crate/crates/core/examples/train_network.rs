//! Gradient-checks the reduced networks, then trains a tiny classifier on
//! two separable blobs.
//!
//!     cargo run --example train_network

use downbeat::ensemble::{default_specs, is_multi_label, train_network, Preset, TrainConfig};
use downbeat::nn::{gradient_check, GradCheckConfig, LayerSpec, LossKind, Network, NetworkSpec, Op, Target, Tensor3};
use downbeat::sync::NetworkInput;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> downbeat::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (kind, spec) in default_specs(Preset::Reduced) {
        let [n, m, l] = spec.input_dims;
        let x = Tensor3::from_vec([n, m, l], (0..n * m * l).map(|_| rng.gen()).collect())?;
        let target = if is_multi_label(kind) {
            Target::Vector(vec![0.0; spec.output_len()])
        } else {
            Target::Class(1)
        };
        let net = Network::init(spec, 1)?;
        let report = gradient_check(&net, &x, &target, &GradCheckConfig::default())?;
        println!(
            "{kind:7} {:7} parameters  {:3} checked  max relative error {:.2e}",
            net.spec.parameter_count(),
            report.checked,
            report.max_rel_error
        );
    }

    let spec = NetworkSpec::new(
        [6, 4, 1],
        vec![
            LayerSpec::new([3, 2, 1, 4], vec![Op::Relu, Op::MaxPool(2, 1)]),
            LayerSpec::new([2, 3, 4, 2], vec![Op::Softmax]),
        ],
        LossKind::Log,
    )?;
    let data: Vec<NetworkInput> = (0..200)
        .map(|i| {
            let class = i % 2;
            let centre = if class == 1 { 0.8 } else { 0.2 };
            let values = (0..24).map(|_| centre + rng.gen_range(-0.15..0.15)).collect();
            NetworkInput {
                window: Tensor3::from_vec([6, 4, 1], values).expect("shape"),
                center_tatum: i,
                covered_tatums: vec![i],
                label: Some(Target::Class(class)),
            }
        })
        .collect();
    let cfg = TrainConfig { epochs: 20, batch: 16, ..TrainConfig::default() };
    let outcome = train_network(&spec, &data, &cfg)?;
    for (epoch, loss) in outcome.losses.iter().enumerate().step_by(4) {
        println!("epoch {:2}  loss {loss:.6}", epoch + 1);
    }
    Ok(())
}
