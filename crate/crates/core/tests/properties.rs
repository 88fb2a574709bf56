use ltkd_core::data::{generate_synthetic, split, GeneratorConfig, SplitRatios};
use ltkd_core::distill::{kd_loss, kd_weight, tempered_binary_softmax, SoftTarget, Temperature};
use ltkd_core::eval::average_precision;
use ltkd_core::nnet::{MlpNetwork, Tensor};
use ltkd_core::subsets::{materialize_subset, SubsetSpec};
use proptest::prelude::*;

fn small_config() -> GeneratorConfig {
    GeneratorConfig {
        n_classes: 6,
        head_count: 60,
        imbalance_ratio: 10.0,
        d_sig: 4,
        ..GeneratorConfig::default()
    }
}

proptest! {
    #[test]
    fn kl_is_non_negative(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let q_hat = SoftTarget::new(a, 1.0 - a).unwrap();
        let q = SoftTarget::new(b, 1.0 - b).unwrap();
        prop_assert!(kd_loss(q_hat, q) >= 0.0);
    }

    #[test]
    fn tempered_softmax_sums_to_one(zp in -500.0f64..500.0, za in -500.0f64..500.0, t in 0.1f64..50.0) {
        let s = tempered_binary_softmax(zp, za, Temperature::new(t).unwrap());
        prop_assert!((s.p_present + s.p_absent - 1.0).abs() < 1e-12);
        prop_assert!(s.p_present.is_finite() && s.p_absent.is_finite());
    }

    #[test]
    fn kd_weight_is_bounded_and_decreasing(t in 0.0f64..=1.0, s in 0.0f64..=1.0, ds in 0.0f64..=1.0, delta in 0.01f64..0.99) {
        let w = kd_weight(t, s, delta);
        prop_assert!((0.0..=1.0).contains(&w));
        let s2 = (s + ds).min(1.0);
        prop_assert!(kd_weight(t, s2, delta) <= w);
    }

    #[test]
    fn ap_is_bounded_and_rank_invariant(
        pairs in prop::collection::vec((-10.0f64..10.0, any::<bool>()), 1..40),
    ) {
        let (scores, labels): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        let ap = average_precision(&scores, &labels);
        prop_assert_eq!(ap.is_none(), !labels.contains(&true));
        if let Some(ap) = ap {
            prop_assert!((0.0..=1.0).contains(&ap));
            let moved: Vec<f64> = scores.iter().map(|s| (s / 3.0).exp() + 7.0).collect();
            prop_assert_eq!(average_precision(&moved, &labels), Some(ap));
        }
    }

    #[test]
    fn forward_commutes_with_row_permutation(seed in 0u64..50, rot in 1usize..4) {
        let net = MlpNetwork::init(&[3, 5, 4], seed).unwrap();
        let rows: Vec<Vec<f64>> = (0..4).map(|r| (0..3).map(|c| (r * 3 + c) as f64 * 0.1 - 0.5).collect()).collect();
        let mut rotated = rows.clone();
        rotated.rotate_left(rot);
        let a = net.forward(&Tensor::from_rows(&rows).unwrap()).unwrap();
        let b = net.forward(&Tensor::from_rows(&rotated).unwrap()).unwrap();
        for r in 0..4 {
            prop_assert_eq!(a.row((r + rot) % 4), b.row(r));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn split_partitions_instances(seed in any::<u64>()) {
        let ds = generate_synthetic(&small_config(), seed).unwrap();
        let s = split(&ds, SplitRatios::default(), seed).unwrap();
        let mut all: Vec<usize> = s.indices.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
    }

    #[test]
    fn materialization_is_idempotent(seed in any::<u64>(), frac in 0.0f64..=1.0) {
        let ds = generate_synthetic(&small_config(), seed).unwrap();
        let spec = SubsetSpec { subset_id: 1, class_ids: vec![2, 4, 5] };
        let once = materialize_subset(&ds, &spec, frac, seed).unwrap();
        let twice = materialize_subset(&once, &spec, frac, seed).unwrap();
        prop_assert_eq!(once.instances, twice.instances);
    }
}
