//! Independent oracles shared by the integration tests: cell-count
//! g-formula enumeration for discrete data, quadratic-time AUC and small
//! data generators.

#![allow(dead_code)]

use std::collections::HashMap;

use cfpred::data::{Dataset, Loss, Observation, OutcomeKind};
use cfpred::glm::{expit, DesignSpec};
use cfpred::longitudinal::{SequentialDataset, SequentialObservation};
use cfpred::nuisance::{CondLossStrategy, NuisanceSpecs, SIMULATION_CLIP};
use cfpred::rng::{stream_rng, StreamRng};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn bern(rng: &mut StreamRng, p: f64) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

/// Model under evaluation in the discrete checks.
pub fn discrete_model(x: &[f64]) -> f64 {
    0.15 + 0.3 * x[0] + 0.4 * x.get(1).copied().unwrap_or(0.0)
}

/// X ∈ {0,1}², binary A and Y, at most 64 rows. Every (x, a, y) cell is
/// populated so saturated models have interior fitted values.
pub fn discrete_static(seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let mut rows = Vec::new();
    for x1 in 0..2u8 {
        for x2 in 0..2u8 {
            for a in 0..2u8 {
                for y in 0..2u8 {
                    rows.push(Observation::new(vec![x1.into(), x2.into()], a, y.into()));
                }
            }
        }
    }
    let extra = rng.random_range(0..=48);
    for _ in 0..extra {
        let x1 = bern(&mut rng, 0.5);
        let x2 = bern(&mut rng, 0.4);
        let a = bern(&mut rng, expit(-0.3 + 0.9 * f64::from(x1) - 0.6 * f64::from(x2)));
        let y = bern(&mut rng, expit(-0.2 + 0.7 * f64::from(x1) + 0.5 * f64::from(x2) - 0.8 * f64::from(a)));
        rows.push(Observation::new(vec![x1.into(), x2.into()], a, y.into()));
    }
    rows.shuffle(&mut rng);
    Dataset::new(rows, OutcomeKind::Binary).unwrap()
}

pub fn saturated_specs(cols: &[usize]) -> NuisanceSpecs {
    NuisanceSpecs {
        propensity: DesignSpec::saturated_binary(cols),
        cond_loss: DesignSpec::saturated_binary(cols),
        clip: SIMULATION_CLIP,
        strategy: CondLossStrategy::Auto,
    }
}

type Key = Vec<i64>;

fn key(v: &[f64]) -> Key {
    v.iter().map(|x| *x as i64).collect()
}

/// Σ_x P̂(x) Σ_a π(a | x) Σ_y P̂(y | x, a) L(y, μ(x)) from cell counts.
pub fn g_formula_static(data: &Dataset, pi1: &dyn Fn(&[f64]) -> f64, model: &dyn Fn(&[f64]) -> f64, loss: Loss) -> f64 {
    let n = data.len() as f64;
    let mut n_x: HashMap<Key, f64> = HashMap::new();
    let mut n_xa: HashMap<(Key, u8), f64> = HashMap::new();
    let mut n_xay: HashMap<(Key, u8, i64), f64> = HashMap::new();
    for r in data.rows() {
        *n_x.entry(key(&r.x)).or_default() += 1.0;
        *n_xa.entry((key(&r.x), r.a)).or_default() += 1.0;
        *n_xay.entry((key(&r.x), r.a, r.y as i64)).or_default() += 1.0;
    }
    let mut total = 0.0;
    for (xk, cx) in &n_x {
        let x: Vec<f64> = xk.iter().map(|v| *v as f64).collect();
        let p1 = pi1(&x);
        for (a, pa) in [(0u8, 1.0 - p1), (1u8, p1)] {
            if pa == 0.0 {
                continue;
            }
            let cxa = n_xa[&(xk.clone(), a)];
            for y in 0..2i64 {
                let c = n_xay.get(&(xk.clone(), a, y)).copied().unwrap_or(0.0);
                total += cx / n * pa * (c / cxa) * loss.eval(y as f64, model(&x));
            }
        }
    }
    total
}

/// Two periods with one binary covariate each: (L0, A0, L1, A1, Y), at most
/// 64 subjects, every combination present.
pub fn discrete_two_period(seed: u64) -> SequentialDataset {
    let mut rng = stream_rng(seed, 1);
    let mut rows = Vec::new();
    let push = |l0: u8, a0: u8, l1: u8, a1: u8, y: u8, rows: &mut Vec<SequentialObservation>| {
        let id = rows.len().to_string();
        rows.push(SequentialObservation::new(id, vec![vec![l0.into()], vec![l1.into()]], vec![a0, a1], y.into()));
    };
    for c in 0..32u8 {
        push(c & 1, (c >> 1) & 1, (c >> 2) & 1, (c >> 3) & 1, (c >> 4) & 1, &mut rows);
    }
    let extra = rng.random_range(0..=32);
    for _ in 0..extra {
        let l0 = bern(&mut rng, 0.5);
        let a0 = bern(&mut rng, expit(-0.2 + 0.8 * f64::from(l0)));
        let l1 = bern(&mut rng, expit(-0.3 + 0.6 * f64::from(l0) + 0.7 * f64::from(a0)));
        let a1 = bern(&mut rng, expit(-0.5 + f64::from(l1) + 0.4 * f64::from(a0)));
        let y = bern(&mut rng, expit(-0.4 + 0.5 * f64::from(l0) + 0.9 * f64::from(l1) - 0.6 * f64::from(a1)));
        push(l0, a0, l1, a1, y, &mut rows);
    }
    rows.shuffle(&mut rng);
    SequentialDataset::new(rows, OutcomeKind::Binary).unwrap()
}

/// Σ_{l0} P̂(l0) Σ_{l1} P̂(l1 | l0, g0) Σ_y P̂(y | l0, g0, l1, g1) L(y, μ(l0)).
pub fn g_formula_two_period(
    data: &SequentialDataset,
    g0: &dyn Fn(i64) -> i64,
    g1: &dyn Fn(i64, i64) -> i64,
    model: &dyn Fn(&[f64]) -> f64,
    loss: Loss,
) -> f64 {
    let mut counts: HashMap<Vec<i64>, f64> = HashMap::new();
    for r in data.rows() {
        let full = [r.x_hist[0][0] as i64, r.a_hist[0] as i64, r.x_hist[1][0] as i64, r.a_hist[1] as i64, r.y as i64];
        for len in 0..=5 {
            *counts.entry(full[..len].to_vec()).or_default() += 1.0;
        }
    }
    let c = |k: &[i64]| counts.get(k).copied().unwrap_or(0.0);
    let mut total = 0.0;
    for l0 in 0..2 {
        let a0 = g0(l0);
        for l1 in 0..2 {
            let a1 = g1(l0, l1);
            for y in 0..2 {
                let p_l0 = c(&[l0]) / c(&[]);
                let p_l1 = c(&[l0, a0, l1]) / c(&[l0, a0]);
                let p_y = c(&[l0, a0, l1, a1, y]) / c(&[l0, a0, l1, a1]);
                total += p_l0 * p_l1 * p_y * loss.eval(y as f64, model(&[l0 as f64]));
            }
        }
    }
    total
}

/// Σ_{i≠j} u_i v_j (I(p_i > p_j) + ½ I(p_i = p_j)) / Σ_{i≠j} u_i v_j.
pub fn brute_auc(pred: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..pred.len() {
        for j in 0..pred.len() {
            if i == j {
                continue;
            }
            let w = u[i] * v[j];
            den += w;
            if pred[i] > pred[j] {
                num += w;
            } else if pred[i] == pred[j] {
                num += 0.5 * w;
            }
        }
    }
    num / den
}

/// Continuous-covariate data for the reduction checks.
pub fn fuzz_dataset(seed: u64, n: usize, outcome: OutcomeKind) -> Dataset {
    let mut rng = stream_rng(seed, 2);
    let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
    let rows = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = bern(&mut rng, expit(b[0] + b[1] * x[0]));
            let eta = b[2] + x[0] - 0.5 * x[1] + 0.7 * f64::from(a);
            let y = match outcome {
                OutcomeKind::Binary => f64::from(bern(&mut rng, expit(eta))),
                OutcomeKind::Continuous => eta + rng.random_range(-1.0..1.0),
            };
            Observation::new(x, a, y)
        })
        .collect();
    Dataset::new(rows, outcome).unwrap()
}

/// Copy of `data` with every treatment replaced by `a`.
pub fn with_treatment(data: &Dataset, a: u8) -> Dataset {
    let rows = data.rows().iter().map(|r| Observation { a, ..r.clone() }).collect();
    Dataset::new(rows, data.outcome()).unwrap()
}

pub mod checks;
