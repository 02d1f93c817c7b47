mod common;

use cfpred::perf::pairwise_auc;
use cfpred::rng::stream_rng;
use common::brute_auc;
use common::checks::auc_case;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn sweep_equals_quadratic_count() {
    for seed in 0..100 {
        let (fast, brute) = auc_case(seed);
        assert_eq!(fast, brute, "seed {seed}");
    }
}

#[test]
fn all_tied_is_one_half() {
    let y = [1.0, 0.0, 1.0, 0.0, 0.0];
    let v: Vec<f64> = y.iter().map(|y| 1.0 - y).collect();
    assert_eq!(pairwise_auc(&[0.3; 5], &y, &v).unwrap(), 0.5);
}

proptest! {
    #[test]
    fn weighted_pairs_match(seed in any::<u64>(), n in 2usize..80) {
        let mut rng = stream_rng(seed, 0);
        let pred: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..6u8))).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let fast = pairwise_auc(&pred, &u, &v).unwrap();
        let brute = brute_auc(&pred, &u, &v);
        prop_assert!((fast - brute).abs() < 1e-12, "{} vs {}", fast, brute);
    }

    #[test]
    fn reversing_predictions_complements(seed in any::<u64>(), n in 4usize..60) {
        let mut rng = stream_rng(seed, 1);
        let pred: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        y[0] = 1.0;
        y[1] = 0.0;
        let v: Vec<f64> = y.iter().map(|y| 1.0 - y).collect();
        let neg: Vec<f64> = pred.iter().map(|p| -p).collect();
        let total = pairwise_auc(&pred, &y, &v).unwrap() + pairwise_auc(&neg, &y, &v).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
