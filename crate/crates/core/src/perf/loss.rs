use serde::{Deserialize, Serialize};

use super::{EstimatorKind, Measure, PerfEstimate};
use crate::data::{Dataset, Loss};
use crate::error::{Error, Result};
use crate::nuisance::NuisanceSet;
use crate::regime::{Regime, StochasticPolicy};
use crate::tailor::Predictor;

fn nonempty(test: &Dataset) -> Result<()> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    Ok(())
}

fn pointwise_losses(test: &Dataset, model: &dyn Predictor, loss: Loss) -> Result<Vec<f64>> {
    test.rows().iter().map(|r| Ok(loss.eval(r.y, model.predict(&r.x)?))).collect()
}

fn static_label(a: u8) -> String {
    Regime::Static(a).describe()
}

/// (1/n) Σ I(Aᵢ = a) wᵢ Lᵢ with wᵢ = 1/êᵢ.
pub fn ipw_mean(a: &[u8], target: u8, e: &[f64], losses: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..losses.len() {
        if a[i] == target {
            let w = 1.0 / e[i];
            s += w * losses[i];
        }
    }
    s / losses.len() as f64
}

/// (1/n) Σ [ĥᵢ + I(Aᵢ = a) wᵢ (Lᵢ − ĥᵢ)], evaluated as wᵢLᵢ + (1 − wᵢ)ĥᵢ
/// for rows at `target` so that the reductions to the naive (w ≡ 1) and
/// weighting (ĥ ≡ 0) estimators hold exactly in floating point.
pub fn dr_mean(a: &[u8], target: u8, e: &[f64], h: &[f64], losses: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..losses.len() {
        s += if a[i] == target {
            let w = 1.0 / e[i];
            w * losses[i] + (1.0 - w) * h[i]
        } else {
            h[i]
        };
    }
    s / losses.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Empirical mean loss against the observed outcomes.
pub fn loss_naive(test: &Dataset, model: &dyn Predictor, loss: Loss) -> Result<PerfEstimate> {
    nonempty(test)?;
    let l = pointwise_losses(test, model, loss)?;
    Ok(PerfEstimate::scalar(EstimatorKind::Naive, Measure::Loss(loss), "observed".into(), mean(&l), test.len()))
}

fn h_values(test: &Dataset, model: &dyn Predictor, nuis: &NuisanceSet) -> Result<Vec<f64>> {
    let h = nuis.cond_loss()?;
    test.rows().iter().map(|r| h.value(&r.x, model.predict(&r.x)?)).collect()
}

fn e_values(test: &Dataset, nuis: &NuisanceSet) -> Result<Vec<f64>> {
    let e = nuis.propensity()?;
    test.rows().iter().map(|r| e.prob(&r.x)).collect()
}

/// Conditional-loss estimator: mean of ĥ_a(Xᵢ) over all test rows.
pub fn loss_cl(test: &Dataset, model: &dyn Predictor, nuis: &NuisanceSet) -> Result<PerfEstimate> {
    nonempty(test)?;
    let h = h_values(test, model, nuis)?;
    Ok(PerfEstimate::scalar(
        EstimatorKind::CL,
        Measure::Loss(nuis.loss),
        static_label(nuis.target_a),
        mean(&h),
        test.len(),
    ))
}

/// Weighting estimator: (1/n) Σ I(Aᵢ = a)/ê_a(Xᵢ) L(Yᵢ, μ̂ᵢ).
pub fn loss_ipw(test: &Dataset, model: &dyn Predictor, nuis: &NuisanceSet) -> Result<PerfEstimate> {
    nonempty(test)?;
    let l = pointwise_losses(test, model, nuis.loss)?;
    let e = e_values(test, nuis)?;
    let v = ipw_mean(&test.treatments(), nuis.target_a, &e, &l);
    Ok(PerfEstimate::scalar(EstimatorKind::IPW, Measure::Loss(nuis.loss), static_label(nuis.target_a), v, test.len()))
}

/// Doubly robust one-step estimator.
pub fn loss_dr(test: &Dataset, model: &dyn Predictor, nuis: &NuisanceSet) -> Result<PerfEstimate> {
    nonempty(test)?;
    let l = pointwise_losses(test, model, nuis.loss)?;
    let e = e_values(test, nuis)?;
    let h = h_values(test, model, nuis)?;
    let v = dr_mean(&test.treatments(), nuis.target_a, &e, &h, &l);
    Ok(PerfEstimate::scalar(EstimatorKind::DR, Measure::Loss(nuis.loss), static_label(nuis.target_a), v, test.len()))
}

/// Dispatches on `kind` (naive uses `nuis.loss`).
pub fn loss_estimate(test: &Dataset, model: &dyn Predictor, nuis: &NuisanceSet, kind: EstimatorKind) -> Result<PerfEstimate> {
    match kind {
        EstimatorKind::Naive => loss_naive(test, model, nuis.loss),
        EstimatorKind::CL | EstimatorKind::OM => loss_cl(test, model, nuis),
        EstimatorKind::IPW => loss_ipw(test, model, nuis),
        EstimatorKind::DR => loss_dr(test, model, nuis),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StochasticKind {
    #[serde(rename = "cl")]
    CL,
    #[serde(rename = "ipw")]
    IPW,
}

/// Expected loss under a stochastic regime Pr*[A = 1 | X].
///
/// `nuis0` and `nuis1` carry the arm-specific nuisances (ĥ₀, ĥ₁ for CL;
/// ê₀, ê₁ for IPW) and must share a loss.
pub fn loss_stochastic(
    test: &Dataset,
    policy: &StochasticPolicy,
    nuis0: &NuisanceSet,
    nuis1: &NuisanceSet,
    model: &dyn Predictor,
    kind: StochasticKind,
) -> Result<PerfEstimate> {
    nonempty(test)?;
    if nuis0.target_a != 0 || nuis1.target_a != 1 {
        return Err(Error::InvalidArgument("stochastic estimators need arm-0 and arm-1 nuisances in that order".into()));
    }
    if nuis0.loss != nuis1.loss {
        return Err(Error::InvalidArgument("arm nuisances were built for different losses".into()));
    }
    let loss = nuis0.loss;
    let pi1: Vec<f64> = test.rows().iter().map(|r| policy.prob_treat(&r.x)).collect::<Result<_>>()?;
    let mut s = 0.0;
    match kind {
        StochasticKind::CL => {
            let h0 = h_values(test, model, nuis0)?;
            let h1 = h_values(test, model, nuis1)?;
            for i in 0..test.len() {
                let p0 = 1.0 - pi1[i];
                s += pi1[i] * h1[i] + p0 * h0[i];
            }
        }
        StochasticKind::IPW => {
            let l = pointwise_losses(test, model, loss)?;
            let e0 = e_values(test, nuis0)?;
            let e1 = e_values(test, nuis1)?;
            for (i, r) in test.rows().iter().enumerate() {
                let w = if r.a == 1 { pi1[i] / e1[i] } else { (1.0 - pi1[i]) / e0[i] };
                s += w * l[i];
            }
        }
    }
    let kind = match kind {
        StochasticKind::CL => EstimatorKind::CL,
        StochasticKind::IPW => EstimatorKind::IPW,
    };
    let label = Regime::Stochastic(policy.clone()).describe();
    Ok(PerfEstimate::scalar(kind, Measure::Loss(loss), label, s / test.len() as f64, test.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Observation, OutcomeKind};
    use crate::nuisance::{CondLossModel, PropensityModel};

    fn data(rows: &[(u8, f64)]) -> Dataset {
        Dataset::new(rows.iter().map(|&(a, y)| Observation::new(vec![y], a, y)).collect(), OutcomeKind::Continuous).unwrap()
    }

    #[test]
    fn naive_arithmetic() {
        let d = Dataset::new(
            vec![Observation::new(vec![0.0], 0, 1.0), Observation::new(vec![1.0], 0, 0.0)],
            OutcomeKind::Binary,
        )
        .unwrap();
        let flip = |x: &[f64]| x[0];
        assert_eq!(loss_naive(&d, &flip, Loss::Squared).unwrap().value, Some(1.0));
        let perfect = |x: &[f64]| 1.0 - x[0];
        assert_eq!(loss_naive(&d, &perfect, Loss::Squared).unwrap().value, Some(0.0));
        assert!(loss_naive(&d.filter(|_| false), &perfect, Loss::Squared).is_err());
    }

    #[test]
    fn ipw_two_row_example() {
        // A = (0, 1), target 0, ê₀ = 0.5, loss of row 0 equals 1.
        let d = data(&[(0, 1.0), (1, 5.0)]);
        let zero = |_: &[f64]| 0.0;
        let nuis = NuisanceSet::new(0, Loss::Squared).with_propensity(PropensityModel::known(0.5).unwrap());
        assert_eq!(loss_ipw(&d, &zero, &nuis).unwrap().value, Some(1.0));
    }

    #[test]
    fn cl_of_constant_h() {
        let d = data(&[(0, 1.0), (1, 5.0), (1, 2.0)]);
        let zero = |_: &[f64]| 0.0;
        let nuis = NuisanceSet::new(0, Loss::Squared).with_cond_loss(CondLossModel::Constant(0.7));
        assert!((loss_cl(&d, &zero, &nuis).unwrap().value.unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn stochastic_half_mixture() {
        let d = data(&[(0, 1.0), (1, 5.0)]);
        let zero = |_: &[f64]| 0.0;
        let n0 = NuisanceSet::new(0, Loss::Squared).with_cond_loss(CondLossModel::Constant(2.0));
        let n1 = NuisanceSet::new(1, Loss::Squared).with_cond_loss(CondLossModel::Constant(4.0));
        let v = loss_stochastic(&d, &StochasticPolicy::Constant(0.5), &n0, &n1, &zero, StochasticKind::CL).unwrap();
        assert_eq!(v.value, Some(3.0));
        let bad = loss_stochastic(&d, &StochasticPolicy::Constant(1.5), &n0, &n1, &zero, StochasticKind::CL);
        assert!(matches!(bad, Err(Error::InvalidRegime(_))));
    }

    #[test]
    fn missing_component_is_reported() {
        let d = data(&[(0, 1.0)]);
        let zero = |_: &[f64]| 0.0;
        let nuis = NuisanceSet::new(0, Loss::Squared);
        assert!(matches!(loss_dr(&d, &zero, &nuis), Err(Error::MissingNuisance(_))));
    }
}
