mod common;

use common::checks::calibration_check;

// Per-bin noise is about 0.01 at this size, so 0.045 leaves room for the
// maximum over ten bins.
#[test]
fn weighted_curve_tracks_the_counterfactual_risk() {
    for seed in 11..14 {
        let r = calibration_check(50_000, seed, true);
        assert!(r.ipw_gap < 0.045, "seed {seed}, randomized: {}", r.ipw_gap);
        let c = calibration_check(50_000, seed, false);
        assert!(c.ipw_gap < 0.045, "seed {seed}, confounded: {}", c.ipw_gap);
        assert!(c.naive_gap > 0.03, "seed {seed}, naive: {}", c.naive_gap);
    }
}
