//! Scores estimates against annotations with the ±70 ms F-measure.
//!
//!     cargo run --example evaluate

use downbeat::eval::{f_measure, f_measure_metrical_variants};

fn main() {
    let ann: Vec<f64> = (0..25).map(|i| 6.0 + 2.0 * i as f64).collect();
    let cases: [(&str, Vec<f64>); 4] = [
        ("exact", ann.clone()),
        ("+40 ms", ann.iter().map(|t| t + 0.04).collect()),
        ("every other", ann.iter().copied().step_by(2).collect()),
        ("twice the rate", (0..50).map(|i| 6.0 + i as f64).collect()),
    ];
    for (name, est) in &cases {
        let s = f_measure(est, &ann, 60.0);
        let v = f_measure_metrical_variants(est, &ann, 60.0);
        println!(
            "{name:15} P {:6.2}  R {:6.2}  F {:6.2}  best metrical variant F {:6.2}",
            s.precision, s.recall, s.f_measure, v.f_measure
        );
    }
}
