use serde::{Deserialize, Serialize};

use super::{EstimatorKind, Measure, PerfEstimate};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::NuisanceSet;
use crate::regime::Regime;
use crate::tailor::Predictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AucKind {
    Naive,
    #[serde(rename = "om")]
    OM,
    #[serde(rename = "ipw")]
    IPW,
}

/// Weighted concordance over ordered pairs i ≠ j:
///
/// Σ uᵢvⱼ [I(pᵢ > pⱼ) + ½ I(pᵢ = pⱼ)] / Σ uᵢvⱼ.
///
/// `u` weighs rows as cases and `v` as non-cases. Runs in O(n log n) by
/// sweeping groups of tied predictions in ascending order. With 0/1
/// weights every partial sum is an integer or half-integer, so the result
/// is exact.
pub fn pairwise_auc(pred: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
    let n = pred.len();
    if u.len() != n || v.len() != n {
        return Err(Error::InvalidArgument("prediction and weight vectors differ in length".into()));
    }
    if pred.iter().any(|p| !p.is_finite()) {
        return Err(Error::Data("non-finite prediction".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| pred[i].total_cmp(&pred[j]));

    let (mut num, mut v_below) = (0.0, 0.0);
    let (mut su, mut sv, mut diag) = (0.0, 0.0, 0.0);
    let mut start = 0;
    while start < n {
        let p = pred[idx[start]];
        let mut end = start;
        let (mut ug, mut vg, mut dg) = (0.0, 0.0, 0.0);
        while end < n && pred[idx[end]] == p {
            let i = idx[end];
            ug += u[i];
            vg += v[i];
            dg += u[i] * v[i];
            end += 1;
        }
        num += ug * v_below + 0.5 * (ug * vg - dg);
        v_below += vg;
        su += ug;
        sv += vg;
        diag += dg;
        start = end;
    }
    let den = su * sv - diag;
    if den <= 0.0 {
        return Err(Error::NoComparablePairs("no case/non-case pairs with positive weight".into()));
    }
    Ok(num / den)
}

/// AUC of `model` on `test`.
///
/// * `Naive`: observed outcomes, all rows.
/// * `OM`: pairs weighted by q̂ᵢ(1 − q̂ⱼ) with q̂ = Pr[Y = 1 | X, A = a]
///   taken from the conditional-loss model of `nuis`.
/// * `IPW`: case/non-case pairs with Aᵢ = Aⱼ = a, weighted by 1/(êᵢêⱼ).
pub fn auc_estimate(test: &Dataset, model: &dyn Predictor, kind: AucKind, nuis: Option<&NuisanceSet>) -> Result<PerfEstimate> {
    test.require_binary("AUC")?;
    if test.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    let pred = model.predict_all(test)?;
    let n = test.len();
    let (u, v, est, regime) = match kind {
        AucKind::Naive => {
            let u: Vec<f64> = test.rows().iter().map(|r| r.y).collect();
            let v: Vec<f64> = u.iter().map(|y| 1.0 - y).collect();
            (u, v, EstimatorKind::Naive, "observed".to_string())
        }
        AucKind::OM => {
            let nuis = nuis.ok_or(Error::MissingNuisance("outcome model"))?;
            let h = nuis.cond_loss()?;
            let mut u = Vec::with_capacity(n);
            for r in test.rows() {
                let q = h
                    .outcome_prob(&r.x)?
                    .ok_or_else(|| Error::InvalidArgument("outcome-model AUC needs a fitted outcome probability".into()))?;
                u.push(q);
            }
            let v = u.iter().map(|q| 1.0 - q).collect();
            (u, v, EstimatorKind::OM, Regime::Static(nuis.target_a).describe())
        }
        AucKind::IPW => {
            let nuis = nuis.ok_or(Error::MissingNuisance("propensity"))?;
            let e = nuis.propensity()?;
            let (mut u, mut v) = (vec![0.0; n], vec![0.0; n]);
            for (i, r) in test.rows().iter().enumerate() {
                if r.a == nuis.target_a {
                    let w = 1.0 / e.prob(&r.x)?;
                    if r.y == 1.0 {
                        u[i] = w;
                    } else {
                        v[i] = w;
                    }
                }
            }
            (u, v, EstimatorKind::IPW, Regime::Static(nuis.target_a).describe())
        }
    };
    let value = pairwise_auc(&pred, &u, &v)?;
    Ok(PerfEstimate::scalar(est, Measure::Auc, regime, value, n))
}
