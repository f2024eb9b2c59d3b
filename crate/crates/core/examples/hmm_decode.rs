//! Decodes a noisy downbeat likelihood with the bar-position HMM and with
//! the fixed threshold.
//!
//!     cargo run --example hmm_decode

use downbeat::hmm::{emissions_from_likelihood, prior_transitions, threshold_baseline, viterbi, BarStateSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> downbeat::Result<()> {
    let space = BarStateSpace::standard();
    let transitions = prior_transitions(&space);
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    // Bars of 8 tatums; the likelihood is weak, noisy and misses some bars.
    let truth: Vec<usize> = (0..96).step_by(8).collect();
    let d: Vec<f64> = (0..96)
        .map(|k| {
            let base = if truth.contains(&k) && rng.gen_bool(0.8) { 0.6 } else { 0.1 };
            (base + rng.gen_range(-0.08..0.08f64)).clamp(0.0, 1.0)
        })
        .collect();

    let path = viterbi(&space, &transitions, &emissions_from_likelihood(&space, &d))?;
    println!("{} states, log probability {:.3}", space.len(), path.log_prob);
    println!("truth      {truth:?}");
    println!("hmm        {:?}", path.downbeat_tatums);
    println!("threshold  {:?}", threshold_baseline(&d, 0.5));
    Ok(())
}
