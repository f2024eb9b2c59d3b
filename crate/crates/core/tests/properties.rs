use std::collections::BTreeSet;

use downbeat::ensemble::shift_chroma;
use downbeat::eval::{count_matches, f_measure, f_measure_metrical_variants, TOLERANCE};
use downbeat::features::{decile_clip, FeatureKind, FeatureMatrix};
use downbeat::hmm::{
    emissions_from_likelihood, path_log_prob, prior_transitions, train_transitions, viterbi, BarStateSpace,
    TRANSITION_FLOOR,
};
use downbeat::nn::ops::{maxpool_with_argmax, softmax};
use downbeat::nn::{conv_forward, Tensor3};
use downbeat::sync::{minmax_scale, quantize_to_grid, reflect_index};
use downbeat::tatum::TatumGrid;
use ndarray::Array2;
use proptest::prelude::*;

fn tensor(dims: [usize; 3], lo: f64, hi: f64) -> impl Strategy<Value = Tensor3> {
    prop::collection::vec(lo..hi, dims[0] * dims[1] * dims[2])
        .prop_map(move |v| Tensor3::from_vec(dims, v).expect("length matches"))
}

fn any_tensor(max: usize) -> impl Strategy<Value = Tensor3> {
    (1..=max, 1..=max, 1..=3usize).prop_flat_map(|(n, m, l)| tensor([n, m, l], -5.0, 5.0))
}

fn event_times() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(0u32..60_000, 0..40)
        .prop_map(|s| s.into_iter().map(|ms| ms as f64 / 1000.0).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_sums_to_one_over_maps(x in any_tensor(6)) {
        let y = softmax(&x);
        let [n, m, l] = y.dims();
        for t in 0..n {
            for v in 0..m {
                let s: f64 = (0..l).map(|c| y.get(t, v, c)).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!((0..l).all(|c| y.get(t, v, c) > 0.0));
            }
        }
    }

    #[test]
    fn maxpool_picks_the_block_maximum(x in any_tensor(9), t2 in 1..4usize, v2 in 1..4usize) {
        let (y, argmax) = maxpool_with_argmax(&x, t2, v2);
        let [n, m, l] = x.dims();
        let [yn, ym, _] = y.dims();
        prop_assert_eq!(yn, n.div_ceil(t2));
        prop_assert_eq!(ym, m.div_ceil(v2));
        prop_assert_eq!(argmax.len(), y.len());
        for c in 0..l {
            for i in 0..yn {
                for j in 0..ym {
                    let block_max = (i * t2..((i + 1) * t2).min(n))
                        .flat_map(|t| (j * v2..((j + 1) * v2).min(m)).map(move |v| (t, v)))
                        .map(|(t, v)| x.get(t, v, c))
                        .fold(f64::MIN, f64::max);
                    prop_assert_eq!(y.get(i, j, c), block_max);
                }
            }
        }
    }

    #[test]
    fn conv_matches_loop_oracle(
        (x, w, b, shape) in (1..4usize, 1..4usize, 1..3usize, 1..3usize, 0..5usize, 0..5usize)
            .prop_flat_map(|(t1, v1, l, n1, dn, dm)| {
                (
                    tensor([t1 + dn, v1 + dm, l], -1.0, 1.0),
                    prop::collection::vec(-1.0..1.0f64, t1 * v1 * l * n1),
                    prop::collection::vec(-1.0..1.0f64, n1),
                    Just([t1, v1, l, n1]),
                )
            })
    ) {
        let [t1, v1, l, n1] = shape;
        let z = conv_forward(&x, &w, &b, shape).unwrap();
        let [zn, zm, _] = z.dims();
        for t in 0..zn {
            for v in 0..zm {
                for o in 0..n1 {
                    let mut s = b[o];
                    for dt in 0..t1 {
                        for dv in 0..v1 {
                            for c in 0..l {
                                s += w[((dt * v1 + dv) * l + c) * n1 + o] * x.get(t + dt, v + dv, c);
                            }
                        }
                    }
                    prop_assert!((z.get(t, v, o) - s).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn matching_is_one_to_one(est in event_times(), ann in event_times()) {
        let m = count_matches(&est, &ann, TOLERANCE);
        prop_assert!(m <= est.len().min(ann.len()));
    }

    #[test]
    fn small_shift_keeps_an_exact_estimate_perfect(ann in event_times(), delta in -0.069..0.069f64) {
        let shifted: Vec<f64> = ann.iter().map(|t| t + delta).collect();
        prop_assert_eq!(count_matches(&shifted, &ann, TOLERANCE), ann.len());
    }

    #[test]
    fn edge_events_never_change_the_score(
        est in event_times(),
        ann in event_times(),
        spurious in prop::collection::vec(prop_oneof![0.0..4.999f64, 57.001..60.0f64], 0..6),
    ) {
        let inner = |v: &[f64]| v.iter().copied().filter(|&t| (5.0..=57.0).contains(&t)).collect::<Vec<_>>();
        let (est, ann) = (inner(&est), inner(&ann));
        let mut noisy = est.clone();
        noisy.extend(&spurious);
        noisy.sort_by(f64::total_cmp);
        let mut noisy_ann = ann.clone();
        noisy_ann.extend(&spurious);
        noisy_ann.sort_by(f64::total_cmp);
        prop_assert_eq!(f_measure(&noisy, &noisy_ann, 60.0), f_measure(&est, &ann, 60.0));
    }

    #[test]
    fn metrical_variants_never_lower_f(est in event_times(), ann in event_times()) {
        prop_assert!(f_measure_metrical_variants(&est, &ann, 60.0).f_measure >= f_measure(&est, &ann, 60.0).f_measure);
    }

    #[test]
    fn chroma_shifts_compose(x in tensor([9, 12, 1], 0.0, 1.0), a in 0..12usize, b in 0..12usize) {
        let ab = shift_chroma(&shift_chroma(&x, a).unwrap(), b).unwrap();
        prop_assert_eq!(&ab, &shift_chroma(&x, (a + b) % 12).unwrap());
        prop_assert_eq!(&shift_chroma(&x, 0).unwrap(), &x);
    }

    #[test]
    fn quantisation_commutes_with_time_shift(
        raw in prop::collection::vec(0.0..10.0f64, 60),
        gaps in prop::collection::vec(0.02..0.05f64, 3..7),
        delta in -1.0..1.0f64,
    ) {
        let hop = 0.02;
        let values = Array2::from_shape_vec((20, 3), raw).unwrap();
        let times: Vec<f64> = (0..20).map(|i| 2.0 + i as f64 * hop).collect();
        let mut tatums = vec![2.05];
        for g in &gaps {
            tatums.push(tatums.last().unwrap() + g);
        }
        prop_assume!(*tatums.last().unwrap() < 2.0 + 19.0 * hop);
        let feat = FeatureMatrix::new(FeatureKind::Odf, values.clone(), times.clone()).unwrap();
        let moved = FeatureMatrix::new(FeatureKind::Odf, values, times.iter().map(|t| t + delta).collect()).unwrap();
        let a = quantize_to_grid(&feat, &TatumGrid::from_times(tatums.clone()).unwrap()).unwrap();
        let b = quantize_to_grid(&moved, &TatumGrid::from_times(tatums.iter().map(|t| t + delta).collect()).unwrap()).unwrap();
        for (p, q) in a.values.iter().zip(b.values.iter()) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn reflection_stays_in_range(idx in -200isize..200, n in 1..40usize) {
        let r = reflect_index(idx, n);
        prop_assert!(r < n);
        if (0..n as isize).contains(&idx) {
            prop_assert_eq!(r, idx as usize);
        }
    }

    #[test]
    fn minmax_scaling_is_bounded_and_idempotent(mut v in prop::collection::vec(-100.0..100.0f64, 1..50)) {
        minmax_scale(&mut v);
        prop_assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
        let once = v.clone();
        minmax_scale(&mut v);
        for (a, b) in once.iter().zip(&v) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decile_clip_is_idempotent(v in prop::collection::vec(0.0..1.0f64, 1..80)) {
        let m = Array2::from_shape_vec((1, v.len()), v).unwrap();
        let once = decile_clip(&m, 0.9);
        prop_assert_eq!(&decile_clip(&once, 0.9), &once);
    }

    #[test]
    fn transition_rows_are_stochastic_and_floored(
        seqs in prop::collection::vec(prop::collection::vec(0..7usize, 0..15), 0..5),
        boost in 1.0..4.0f64,
    ) {
        let space = BarStateSpace::new(&[3, 4]).unwrap();
        let a = train_transitions(&space, &seqs, boost).unwrap();
        let n = space.len();
        for i in 0..n {
            let row = a.row(i);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p >= TRANSITION_FLOOR / n as f64 / boost - 1e-15));
        }
    }

    #[test]
    fn viterbi_beats_any_other_path(
        d in prop::collection::vec(0.01..0.99f64, 1..12),
        other in prop::collection::vec(0..7usize, 12),
    ) {
        let space = BarStateSpace::new(&[3, 4]).unwrap();
        let a = prior_transitions(&space);
        let e = emissions_from_likelihood(&space, &d);
        let best = viterbi(&space, &a, &e).unwrap();
        let alt = &other[..d.len()];
        prop_assert!(best.log_prob >= path_log_prob(&space, &a, &e, alt) - 1e-9);
        let db: BTreeSet<usize> = best.downbeat_tatums.iter().copied().collect();
        prop_assert!(db.iter().all(|&k| space.is_h1(best.states[k])));
    }
}
