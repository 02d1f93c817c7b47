//! Per-case checks returning diagnostics, shared by the focused test files
//! and the acceptance target.

use cfpred::data::{split_dataset, Dataset, Loss, Observation, OutcomeKind};
use cfpred::glm::{build_design, expit, fit_glm_rows, log_likelihood, score, DesignSpec, Family, Term};
use cfpred::longitudinal::{
    loss_ice_sequential, loss_ipw_sequential, loss_naive_sequential, sequential_weights, HistorySpecs,
    SequentialDataset,
};
use cfpred::nuisance::{
    fit_cond_loss, fit_cond_loss_with, fit_propensity, CondLossModel, CondLossStrategy, NuisanceSet,
    PropensityModel, DEFAULT_CLIP, SIMULATION_CLIP,
};
use cfpred::perf::{
    calibration_curve, loss_cl, loss_dr, loss_ipw, loss_naive, loss_stochastic, pairwise_auc, CalibrationKind,
    CalibrationMethod, StochasticKind,
};
use cfpred::regime::{SequentialRegime, SequentialRule, StochasticPolicy};
use cfpred::rng::stream_rng;
use cfpred::simulate::{exp2_model, DgpKind};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;

fn value(r: cfpred::Result<cfpred::perf::PerfEstimate>) -> f64 {
    r.unwrap().value.unwrap()
}

/// |estimate − enumeration| for every estimator on one discrete dataset.
pub fn oracle_errors(seed: u64) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let data = discrete_static(seed);
    let specs = saturated_specs(&[0, 1]);
    let model = discrete_model;
    for loss in [Loss::Squared, Loss::Absolute] {
        let mut arms = Vec::new();
        for a in 0..2u8 {
            let nuis = NuisanceSet::fit(&data, &model, &specs, a, loss).unwrap();
            let truth = g_formula_static(&data, &|_| f64::from(a), &model, loss);
            for (name, v) in [
                ("cl", value(loss_cl(&data, &model, &nuis))),
                ("ipw", value(loss_ipw(&data, &model, &nuis))),
                ("dr", value(loss_dr(&data, &model, &nuis))),
            ] {
                out.push((format!("{name} a={a} {loss:?}"), (v - truth).abs()));
            }
            arms.push(nuis);
        }
        let policies: [(StochasticPolicy, fn(&[f64]) -> f64); 2] = [
            (StochasticPolicy::Constant(0.3), |_| 0.3),
            (StochasticPolicy::Logistic { intercept: -0.5, coefs: vec![(0, 1.2)] }, |x| expit(-0.5 + 1.2 * x[0])),
        ];
        for (policy, pi1) in &policies {
            let truth = g_formula_static(&data, pi1, &model, loss);
            for kind in [StochasticKind::CL, StochasticKind::IPW] {
                let v = value(loss_stochastic(&data, policy, &arms[0], &arms[1], &model, kind));
                out.push((format!("stochastic {kind:?} {policy:?} {loss:?}"), (v - truth).abs()));
            }
        }
    }

    let seq = discrete_two_period(seed);
    let specs = HistorySpecs {
        per_time: vec![DesignSpec::saturated_binary(&[0]), DesignSpec::saturated_binary(&[0, 1])],
        include_treatments: false,
    };
    let threshold = |covariate| SequentialRule::Threshold { covariate, cutoff: 0.5, above: 1, below: 0 };
    let regimes: Vec<(&str, SequentialRegime, fn(i64) -> i64, fn(i64, i64) -> i64)> = vec![
        ("always 0", SequentialRegime::always(0, 1).unwrap(), |_| 0, |_, _| 0),
        ("always 1", SequentialRegime::always(1, 1).unwrap(), |_| 1, |_, _| 1),
        ("path 1,0", SequentialRegime::static_path(&[1, 0]).unwrap(), |_| 1, |_, _| 0),
        (
            "dynamic",
            SequentialRegime::new(vec![SequentialRule::Constant(1), threshold(0)]).unwrap(),
            |_| 1,
            |_, l1| l1,
        ),
        ("fully dynamic", SequentialRegime::new(vec![threshold(0), threshold(0)]).unwrap(), |l0| l0, |_, l1| l1),
    ];
    let model = |x: &[f64]| 0.25 + 0.5 * x[0];
    for loss in [Loss::Squared, Loss::Absolute] {
        for (name, g, g0, g1) in &regimes {
            let truth = g_formula_two_period(&seq, g0, g1, &model, loss);
            let ice = value(loss_ice_sequential(&seq, g, &specs, &model, loss, CondLossStrategy::Auto));
            let w = sequential_weights(&seq, g, &specs, None, SIMULATION_CLIP).unwrap();
            let ipw = value(loss_ipw_sequential(&seq, g, &w, &model, loss));
            out.push((format!("ice {name} {loss:?}"), (ice - truth).abs()));
            out.push((format!("sequential ipw {name} {loss:?}"), (ipw - truth).abs()));
        }
    }
    out
}

fn bitwise(name: &str, a: f64, b: f64) -> Result<(), String> {
    if a.to_bits() == b.to_bits() {
        Ok(())
    } else {
        Err(format!("{name}: {a:e} != {b:e}"))
    }
}

/// The five exact reductions on one random case.
pub fn reduction_case(seed: u64) -> Result<(), String> {
    let mut rng = stream_rng(seed, 3);
    let n = rng.random_range(20..200);
    let outcome = if rng.random::<bool>() { OutcomeKind::Binary } else { OutcomeKind::Continuous };
    let loss = if rng.random::<bool>() { Loss::Squared } else { Loss::Absolute };
    let a = u8::from(rng.random::<bool>());
    let data = fuzz_dataset(seed, n, outcome);
    if data.count_treated(0) < 5 || data.count_treated(1) < 5 {
        return Ok(());
    }
    let (c0, c1, c2) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let model = move |x: &[f64]| {
        let eta = c0 + c1 * x[0] + c2 * x[1];
        if outcome == OutcomeKind::Binary {
            expit(eta)
        } else {
            eta
        }
    };
    let lin = DesignSpec::linear(0..2);
    let e = fit_propensity(&data, &lin, a, DEFAULT_CLIP).map_err(|e| e.to_string())?;
    let h = fit_cond_loss(&data, &model, &lin, a, loss).map_err(|e| e.to_string())?;

    // Everyone at the target with ê ≡ 1.
    let all_a = with_treatment(&data, a);
    let nuis = NuisanceSet::new(a, loss).with_propensity(PropensityModel::known(1.0).unwrap()).with_cond_loss(h.clone());
    bitwise("dr = naive", value(loss_dr(&all_a, &model, &nuis)), value(loss_naive(&all_a, &model, loss)))?;
    let fitted_one = fit_propensity(&all_a, &lin, a, DEFAULT_CLIP).map_err(|e| e.to_string())?;
    let nuis = NuisanceSet::new(a, loss).with_propensity(fitted_one).with_cond_loss(h.clone());
    bitwise("dr = naive (fitted)", value(loss_dr(&all_a, &model, &nuis)), value(loss_naive(&all_a, &model, loss)))?;

    // ĥ ≡ 0.
    let nuis = NuisanceSet::new(a, loss).with_propensity(e.clone()).with_cond_loss(CondLossModel::Constant(0.0));
    bitwise("dr = ipw", value(loss_dr(&data, &model, &nuis)), value(loss_ipw(&data, &model, &nuis)))?;

    // Nobody at the target.
    let none_a = with_treatment(&data, 1 - a);
    let nuis = NuisanceSet::new(a, loss).with_propensity(e.clone()).with_cond_loss(h.clone());
    bitwise("dr = cl", value(loss_dr(&none_a, &model, &nuis)), value(loss_cl(&none_a, &model, &nuis)))?;

    // Degenerate stochastic policy.
    let arm = |b: u8| -> Result<NuisanceSet, String> {
        Ok(NuisanceSet::new(b, loss)
            .with_propensity(fit_propensity(&data, &lin, b, DEFAULT_CLIP).map_err(|e| e.to_string())?)
            .with_cond_loss(fit_cond_loss(&data, &model, &lin, b, loss).map_err(|e| e.to_string())?))
    };
    let (n0, n1) = (arm(0)?, arm(1)?);
    let target = if a == 0 { &n0 } else { &n1 };
    let policy = StochasticPolicy::Constant(f64::from(a));
    bitwise(
        "stochastic cl = static cl",
        value(loss_stochastic(&data, &policy, &n0, &n1, &model, StochasticKind::CL)),
        value(loss_cl(&data, &model, target)),
    )?;
    bitwise(
        "stochastic ipw = static ipw",
        value(loss_stochastic(&data, &policy, &n0, &n1, &model, StochasticKind::IPW)),
        value(loss_ipw(&data, &model, target)),
    )?;

    // Horizon 0.
    let seq = SequentialDataset::from_static(&data).unwrap();
    let g = SequentialRegime::always(a, 0).unwrap();
    let specs = HistorySpecs { per_time: vec![lin.clone()], include_treatments: false };
    let w = sequential_weights(&seq, &g, &specs, None, DEFAULT_CLIP).map_err(|e| e.to_string())?;
    bitwise("k=0 ipw", value(loss_ipw_sequential(&seq, &g, &w, &model, loss)), value(loss_ipw(&data, &model, target)))?;
    let strategy = CondLossStrategy::Auto;
    let static_h = NuisanceSet::new(a, loss)
        .with_cond_loss(fit_cond_loss_with(&data, &model, &lin, a, loss, strategy).map_err(|e| e.to_string())?);
    bitwise(
        "k=0 ice",
        value(loss_ice_sequential(&seq, &g, &specs, &model, loss, strategy)),
        value(loss_cl(&data, &model, &static_h)),
    )?;
    bitwise("k=0 naive", value(loss_naive_sequential(&seq, &model, loss)), value(loss_naive(&data, &model, loss)))?;
    Ok(())
}

/// Fast and brute-force AUC on one random instance with ties.
pub fn auc_case(seed: u64) -> (f64, f64) {
    let mut rng = stream_rng(seed, 4);
    let n = rng.random_range(2..=200);
    let levels = rng.random_range(2..12);
    let mut pred: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels)) / 4.0).collect();
    let mut y: Vec<f64> = (0..n).map(|_| f64::from(bern(&mut rng, 0.4))).collect();
    y[0] = 1.0;
    y[1] = 0.0;
    if rng.random::<bool>() {
        pred.iter_mut().for_each(|p| *p += rng.random_range(0.0..1e-3));
    }
    let v: Vec<f64> = y.iter().map(|y| 1.0 - y).collect();
    (pairwise_auc(&pred, &y, &v).unwrap(), brute_auc(&pred, &y, &v))
}

fn random_rows(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = stream_rng(seed, 5);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
    let yc: Vec<f64> = x
        .iter()
        .map(|x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2] * x[2] + Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let yb: Vec<f64> = x.iter().map(|x| f64::from(bern(&mut rng, expit(0.3 + x[0] - 0.8 * x[1])))).collect();
    (x, w, yc, yb)
}

fn glm_spec() -> DesignSpec {
    DesignSpec::new(vec![Term::linear(0), Term::linear(1), Term::linear(2), Term::power(2, 2)], true).unwrap()
}

/// Max relative difference between the WLS fit and an independent solve of
/// the weighted normal equations.
pub fn wls_error(seed: u64) -> f64 {
    let (x, w, y, _) = random_rows(seed, 150);
    let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let fit = fit_glm_rows(&glm_spec(), &rows, &y, &w, Family::Gaussian).unwrap();
    let (_, m) = build_design(&rows, &glm_spec()).unwrap();
    let xm = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m.get(i, j));
    let wm = DMatrix::from_diagonal(&DVector::from_vec(w));
    let xtw = xm.transpose() * wm;
    let beta = (&xtw * &xm).lu().solve(&(&xtw * DVector::from_vec(y))).unwrap();
    fit.coefficients
        .iter()
        .zip(beta.iter())
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Euclidean norm of the score at the IRLS solution.
pub fn irls_score_norm(seed: u64) -> f64 {
    let (x, w, _, y) = random_rows(seed, 300);
    let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let fit = fit_glm_rows(&glm_spec(), &rows, &y, &w, Family::BinomialLogit).unwrap();
    assert!(fit.converged);
    let (_, m) = build_design(&rows, &glm_spec()).unwrap();
    score(&m, &y, &w, &fit.coefficients, Family::BinomialLogit).iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Max relative difference between the analytic score and a central
/// finite difference of the log-likelihood at a random β.
pub fn fd_gradient_error(seed: u64) -> f64 {
    let (x, w, yc, yb) = random_rows(seed, 80);
    let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let (_, m) = build_design(&rows, &glm_spec()).unwrap();
    let mut rng = stream_rng(seed, 6);
    let beta: Vec<f64> = (0..m.ncols()).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut worst: f64 = 0.0;
    for (family, y) in [(Family::Gaussian, &yc), (Family::BinomialLogit, &yb)] {
        let g = score(&m, y, &w, &beta, family);
        for j in 0..beta.len() {
            let h = 1e-5 * beta[j].abs().max(1.0);
            let (mut up, mut dn) = (beta.clone(), beta.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (log_likelihood(&m, y, &w, &up, family) - log_likelihood(&m, y, &w, &dn, family)) / (2.0 * h);
            worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1.0));
        }
    }
    worst
}

/// Experiment-2 covariates and outcomes with a chosen treatment law.
pub fn exp2_like(n: usize, seed: u64, stream: u64, randomized: bool) -> Dataset {
    let kind = DgpKind::Exp2;
    let mut rng = stream_rng(seed, stream);
    let rows = (0..n)
        .map(|_| {
            let x: Vec<f64> = [0.2, 0.0, 0.5]
                .iter()
                .map(|m| m + 0.2f64.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            let p = if randomized { 0.5 } else { kind.treatment_prob(&x) };
            let a = bern(&mut rng, p);
            let y = bern(&mut rng, kind.outcome_mean(&x, a));
            Observation::new(x, a, y.into())
        })
        .collect();
    Dataset::new(rows, OutcomeKind::Binary).unwrap()
}

pub struct CalibrationCheck {
    /// max over bins of |IPW − truth|.
    pub ipw_gap: f64,
    /// max over bins of |naive − truth|.
    pub naive_gap: f64,
}

/// Binned calibration at A = 0 against the per-bin mean of E[Y⁰ | X].
pub fn calibration_check(n: usize, seed: u64, randomized: bool) -> CalibrationCheck {
    let train = exp2_like(2000, seed, 7, randomized);
    let model = exp2_model(&train).unwrap();
    let test = exp2_like(n, seed, 8, randomized);
    let e = fit_propensity(&test, &DesignSpec::quadratic(0..3), 0, SIMULATION_CLIP).unwrap();
    let nuis = NuisanceSet::new(0, Loss::Squared).with_propensity(e);
    let method = CalibrationMethod::Binned { bins: 10 };
    let ipw = calibration_curve(&test, &model, Some(&nuis), method, CalibrationKind::IPW).unwrap().curve.unwrap();
    let naive = calibration_curve(&test, &model, None, method, CalibrationKind::Naive).unwrap().curve.unwrap();

    // Truth with the same equal-count bins.
    use cfpred::tailor::Predictor;
    let pred = model.predict_all(&test).unwrap();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| pred[i].total_cmp(&pred[j]));
    let (mut ipw_gap, mut naive_gap) = (0.0f64, 0.0f64);
    for b in 0..10 {
        let members = &idx[b * n / 10..(b + 1) * n / 10];
        let truth = members.iter().map(|&i| DgpKind::Exp2.outcome_mean(&test.rows()[i].x, 0)).sum::<f64>()
            / members.len() as f64;
        ipw_gap = ipw_gap.max((ipw[b].observed - truth).abs());
        naive_gap = naive_gap.max((naive[b].observed - truth).abs());
    }
    CalibrationCheck { ipw_gap, naive_gap }
}

/// (mean bootstrap SE, Monte Carlo SD) of the naive MSE over Experiment-2
/// datasets.
pub fn bootstrap_vs_mc(datasets: usize, b: usize, n: usize, seed: u64) -> (f64, f64) {
    use cfpred::inference::{bootstrap, CiMethod};
    use cfpred::parallel::{map_indexed, Parallelism};
    use cfpred::rng::replicate_seed;
    use cfpred::simulate::Dgp;
    let results = map_indexed(datasets, Parallelism::Parallel, |r| {
        let s = replicate_seed(seed, r as u64);
        let data = split_dataset(Dgp::new(DgpKind::Exp2, n, s).unwrap().generate(), 0.5, s).unwrap();
        let model = exp2_model(&data.train()).unwrap();
        let test = data.test();
        let est = |d: &Dataset| loss_naive(d, &model, Loss::Squared).map(|e| e.value.unwrap());
        let bs = bootstrap(&test, est, b, s, CiMethod::Percentile, Parallelism::Sequential).unwrap();
        (bs.point, bs.se)
    });
    let k = results.len() as f64;
    let mean_se = results.iter().map(|r| r.1).sum::<f64>() / k;
    let mean = results.iter().map(|r| r.0).sum::<f64>() / k;
    let sd = (results.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    (mean_se, sd)
}
