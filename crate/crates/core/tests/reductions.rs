//! Exact identities between estimators in degenerate configurations.

mod common;

use common::checks::reduction_case;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reductions_hold_bitwise(seed in any::<u64>()) {
        if let Err(msg) = reduction_case(seed) {
            prop_assert!(false, "{}", msg);
        }
    }
}
