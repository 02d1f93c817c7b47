mod common;

use common::checks::{fd_gradient_error, irls_score_norm, wls_error};

#[test]
fn weighted_least_squares_solves_normal_equations() {
    for seed in 0..20 {
        let e = wls_error(seed);
        assert!(e < 1e-10, "seed {seed}: {e:e}");
    }
}

#[test]
fn irls_reaches_a_stationary_point() {
    for seed in 0..20 {
        let g = irls_score_norm(seed);
        assert!(g < 1e-6, "seed {seed}: {g:e}");
    }
}

#[test]
fn score_is_the_likelihood_gradient() {
    for seed in 0..20 {
        let e = fd_gradient_error(seed);
        assert!(e < 1e-4, "seed {seed}: {e:e}");
    }
}
