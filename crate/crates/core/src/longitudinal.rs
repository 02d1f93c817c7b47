//! Time-varying treatments: data with covariate and treatment histories,
//! product-weight estimators and iterated conditional expectations for
//! sequential regimes.
//!
//! Prediction models are evaluated on the baseline covariates X_0, so a
//! model fit on time-fixed data can be assessed under a sequential regime.
//! At time k the history features are the stacked covariates X_0, ..., X_k
//! (optionally followed by A_0, ..., A_{k-1}); per-time design specs index
//! into that stacked vector.

use serde::{Deserialize, Serialize};

use crate::data::{split_dataset, Dataset, Loss, Observation, OutcomeKind, Split};
use crate::error::{Error, Result};
use crate::glm::{fit_glm_rows, DesignSpec, Family, GlmFit};
use crate::nuisance::{CondLossModel, CondLossStrategy};
use crate::perf::{EstimatorKind, Measure, PerfEstimate};
use crate::regime::{Regime, SequentialRegime};
use crate::tailor::{arm_probability, Predictor};

/// One subject: X_0..X_K, A_0..A_K and the terminal outcome Y_{K+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialObservation {
    pub id: String,
    pub x_hist: Vec<Vec<f64>>,
    pub a_hist: Vec<u8>,
    pub y: f64,
    pub split: Split,
}

impl SequentialObservation {
    pub fn new(id: impl Into<String>, x_hist: Vec<Vec<f64>>, a_hist: Vec<u8>, y: f64) -> Self {
        Self { id: id.into(), x_hist, a_hist, y, split: Split::Test }
    }

    pub fn baseline(&self) -> &[f64] {
        &self.x_hist[0]
    }

    /// Stacked X_0..X_k, then A_0..A_{k-1} when `with_treatments`.
    pub fn history(&self, k: usize, with_treatments: bool) -> Vec<f64> {
        let mut h: Vec<f64> = self.x_hist[..=k].iter().flatten().copied().collect();
        if with_treatments {
            h.extend(self.a_hist[..k].iter().map(|&a| f64::from(a)));
        }
        h
    }

    /// a^g_k for this subject's observed history.
    pub fn regime_value(&self, regime: &SequentialRegime, k: usize) -> u8 {
        regime.decide(k, &self.a_hist[..k], &self.x_hist[..=k])
    }

    /// True if A_s = a^g_s for every s <= t.
    pub fn follows_through(&self, regime: &SequentialRegime, t: usize) -> bool {
        (0..=t).all(|s| self.a_hist[s] == self.regime_value(regime, s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialDataset {
    rows: Vec<SequentialObservation>,
    horizon: usize,
    dim: usize,
    outcome: OutcomeKind,
}

impl SequentialDataset {
    pub fn new(rows: Vec<SequentialObservation>, outcome: OutcomeKind) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Data("sequential dataset has no subjects".into()))?;
        if first.x_hist.is_empty() {
            return Err(Error::Data("subjects need at least one time point".into()));
        }
        let horizon = first.x_hist.len() - 1;
        let dim = first.x_hist[0].len();
        for r in &rows {
            if r.x_hist.len() != horizon + 1 || r.a_hist.len() != horizon + 1 {
                return Err(Error::Data(format!(
                    "subject {} has {} covariate and {} treatment times; expected {}",
                    r.id,
                    r.x_hist.len(),
                    r.a_hist.len(),
                    horizon + 1
                )));
            }
            if r.x_hist.iter().any(|x| x.len() != dim || x.iter().any(|v| !v.is_finite())) {
                return Err(Error::Data(format!("subject {} has malformed covariates", r.id)));
            }
            if r.a_hist.iter().any(|&a| a > 1) {
                return Err(Error::Data(format!("subject {} has a non-binary treatment", r.id)));
            }
            let y_ok = match outcome {
                OutcomeKind::Binary => r.y == 0.0 || r.y == 1.0,
                OutcomeKind::Continuous => r.y.is_finite(),
            };
            if !y_ok {
                return Err(Error::Data(format!("subject {} has invalid outcome {}", r.id, r.y)));
            }
        }
        Ok(Self { rows, horizon, dim, outcome })
    }

    /// Horizon-0 view of a time-fixed dataset (ids are row numbers).
    pub fn from_static(data: &Dataset) -> Result<Self> {
        let rows = data
            .rows()
            .iter()
            .enumerate()
            .map(|(i, r)| SequentialObservation {
                id: i.to_string(),
                x_hist: vec![r.x.clone()],
                a_hist: vec![r.a],
                y: r.y,
                split: r.split,
            })
            .collect();
        Self::new(rows, data.outcome())
    }

    /// Time-fixed view; only defined for horizon 0.
    pub fn to_static(&self) -> Result<Dataset> {
        if self.horizon != 0 {
            return Err(Error::InvalidArgument("only horizon-0 data has a time-fixed view".into()));
        }
        let rows = self
            .rows
            .iter()
            .map(|r| Observation { x: r.x_hist[0].clone(), a: r.a_hist[0], y: r.y, split: r.split })
            .collect();
        Dataset::new(rows, self.outcome)
    }

    pub fn rows(&self) -> &[SequentialObservation] {
        &self.rows
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outcome(&self) -> OutcomeKind {
        self.outcome
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self { rows: idx.iter().map(|&i| self.rows[i].clone()).collect(), ..self.clone_meta() }
    }

    pub fn test(&self) -> Self {
        Self { rows: self.rows.iter().filter(|r| r.split == Split::Test).cloned().collect(), ..self.clone_meta() }
    }

    pub fn train(&self) -> Self {
        Self { rows: self.rows.iter().filter(|r| r.split == Split::Train).cloned().collect(), ..self.clone_meta() }
    }

    /// Assigns whole subjects to the training split, with the same draws
    /// [`split_dataset`] would make for a time-fixed file of equal length.
    pub fn split(mut self, fraction_train: f64, seed: u64) -> Result<Self> {
        let placeholder = Dataset::new(
            self.rows.iter().map(|_| Observation::new(Vec::new(), 0, 0.0)).collect(),
            OutcomeKind::Continuous,
        )?;
        let assigned = split_dataset(placeholder, fraction_train, seed)?;
        for (r, p) in self.rows.iter_mut().zip(assigned.rows()) {
            r.split = p.split;
        }
        Ok(self)
    }

    /// (X_0, A_0, Y) per subject: the data a baseline prediction model sees.
    pub fn baseline_view(&self) -> Result<Dataset> {
        let rows = self
            .rows
            .iter()
            .map(|r| Observation { x: r.x_hist[0].clone(), a: r.a_hist[0], y: r.y, split: r.split })
            .collect();
        Dataset::new(rows, self.outcome)
    }

    fn clone_meta(&self) -> Self {
        Self { rows: Vec::new(), horizon: self.horizon, dim: self.dim, outcome: self.outcome }
    }

    fn check_regime(&self, regime: &SequentialRegime) -> Result<()> {
        if regime.horizon() != self.horizon {
            return Err(Error::InvalidRegime(format!(
                "regime has horizon {} but the data have horizon {}",
                regime.horizon(),
                self.horizon
            )));
        }
        if self.rows.is_empty() {
            return Err(Error::InvalidArgument("test set is empty".into()));
        }
        Ok(())
    }
}

/// Per-time design specs over the history features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistorySpecs {
    pub per_time: Vec<DesignSpec>,
    #[serde(default)]
    pub include_treatments: bool,
}

impl HistorySpecs {
    /// Main effects of every stacked covariate at each time.
    pub fn main_effects(horizon: usize, dim: usize) -> Self {
        let per_time = (0..=horizon).map(|k| DesignSpec::linear(0..dim * (k + 1))).collect();
        Self { per_time, include_treatments: false }
    }

    fn at(&self, k: usize, horizon: usize) -> Result<&DesignSpec> {
        if self.per_time.len() != horizon + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} per-time specs given for horizon {horizon}",
                self.per_time.len()
            )));
        }
        Ok(&self.per_time[k])
    }
}

/// Product inverse-probability weights for a sequential regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialWeights {
    pub weights: Vec<f64>,
    /// Subjects following the regime through time k, k = 0..K.
    pub followers: Vec<usize>,
    pub stabilized: bool,
}

fn follower_flags(data: &SequentialDataset, regime: &SequentialRegime) -> Vec<Vec<bool>> {
    data.rows
        .iter()
        .map(|r| {
            let mut f = Vec::with_capacity(data.horizon + 1);
            let mut ok = true;
            for k in 0..=data.horizon {
                ok = ok && r.a_hist[k] == r.regime_value(regime, k);
                f.push(ok);
            }
            f
        })
        .collect()
}

fn follower_counts(flags: &[Vec<bool>], horizon: usize) -> Vec<usize> {
    (0..=horizon).map(|k| flags.iter().filter(|f| f[k]).count()).collect()
}

/// Logistic fit of A_k on `features` among `in_scope` rows, or `None` when
/// every in-scope row already takes the regime value (probability one).
fn fit_treatment(
    data: &SequentialDataset,
    k: usize,
    in_scope: &[usize],
    features: &[Vec<f64>],
    spec: &DesignSpec,
    regime: &SequentialRegime,
) -> Result<Option<GlmFit>> {
    let deviators = in_scope.iter().filter(|&&i| data.rows[i].a_hist[k] != data.rows[i].regime_value(regime, k)).count();
    if deviators == in_scope.len() {
        return Err(Error::Positivity(format!("no subjects follow the regime at time {k}")));
    }
    if deviators == 0 {
        return Ok(None);
    }
    let rows: Vec<&[f64]> = in_scope.iter().map(|&i| features[i].as_slice()).collect();
    let a: Vec<f64> = in_scope.iter().map(|&i| f64::from(data.rows[i].a_hist[k])).collect();
    let fit = fit_glm_rows(spec, &rows, &a, &vec![1.0; rows.len()], Family::BinomialLogit)?;
    if !fit.converged {
        log::warn!("treatment model at time {k} did not converge");
    }
    Ok(Some(fit))
}

/// W = I(Ā_K = ā^g_K) / Π_k P̂r[A_k = a^g_k | X̄_k, Ā_{k-1} = ā^g_{k-1}].
///
/// The time-k model is fit among subjects following the regime through
/// k − 1. With `stabilize`, the numerator Π_k P̂r[A_k = a^g_k | V] is fit on
/// the baseline covariates V = X_0 with the given spec, over the same rows.
pub fn sequential_weights(
    data: &SequentialDataset,
    regime: &SequentialRegime,
    specs: &HistorySpecs,
    stabilize: Option<&DesignSpec>,
    clip: (f64, f64),
) -> Result<SequentialWeights> {
    data.check_regime(regime)?;
    let k_max = data.horizon;
    let flags = follower_flags(data, regime);
    let n = data.len();
    let mut denom = vec![1.0; n];
    let mut numer = vec![1.0; n];
    for k in 0..=k_max {
        let in_scope: Vec<usize> = (0..n).filter(|&i| k == 0 || flags[i][k - 1]).collect();
        let features: Vec<Vec<f64>> = data.rows.iter().map(|r| r.history(k, specs.include_treatments)).collect();
        let fit = fit_treatment(data, k, &in_scope, &features, specs.at(k, k_max)?, regime)?;
        let baseline: Vec<Vec<f64>> = data.rows.iter().map(|r| r.baseline().to_vec()).collect();
        let num_fit = match stabilize {
            Some(spec) => fit_treatment(data, k, &in_scope, &baseline, spec, regime)?,
            None => None,
        };
        for &i in &in_scope {
            if !flags[i][k] {
                continue;
            }
            let target = data.rows[i].regime_value(regime, k);
            if let Some(f) = &fit {
                denom[i] *= arm_probability(f, &features[i], target, clip)?;
            }
            if let Some(f) = &num_fit {
                numer[i] *= arm_probability(f, &baseline[i], target, clip)?;
            }
        }
    }
    let weights = (0..n)
        .map(|i| if flags[i][k_max] { if stabilize.is_some() { numer[i] / denom[i] } else { 1.0 / denom[i] } } else { 0.0 })
        .collect();
    Ok(SequentialWeights { weights, followers: follower_counts(&flags, k_max), stabilized: stabilize.is_some() })
}

fn sequential_label(regime: &SequentialRegime) -> String {
    Regime::Sequential(regime.clone()).describe()
}

/// Observed mean loss over all subjects, ignoring treatment history.
pub fn loss_naive_sequential(data: &SequentialDataset, model: &dyn Predictor, loss: Loss) -> Result<PerfEstimate> {
    let mut s = 0.0;
    for r in &data.rows {
        s += loss.eval(r.y, model.predict(r.baseline())?);
    }
    let n = data.len();
    Ok(PerfEstimate::scalar(EstimatorKind::Naive, Measure::Loss(loss), "observed".into(), s / n as f64, n))
}

/// (1/n) Σ Wᵢ L(Yᵢ, μ̂(X_{0,i})).
pub fn loss_ipw_sequential(
    data: &SequentialDataset,
    regime: &SequentialRegime,
    weights: &SequentialWeights,
    model: &dyn Predictor,
    loss: Loss,
) -> Result<PerfEstimate> {
    data.check_regime(regime)?;
    if weights.weights.len() != data.len() {
        return Err(Error::InvalidArgument("weights were computed on different rows".into()));
    }
    let mut s = 0.0;
    for (r, w) in data.rows.iter().zip(&weights.weights) {
        if *w != 0.0 {
            s += w * loss.eval(r.y, model.predict(r.baseline())?);
        }
    }
    let mut est =
        PerfEstimate::scalar(EstimatorKind::IPW, Measure::Loss(loss), sequential_label(regime), s / data.len() as f64, data.len());
    est.followers = Some(weights.followers.clone());
    Ok(est)
}

/// Iterated conditional expectations, t = K, ..., 0.
///
/// At t = K the loss is modelled among followers through K (for binary
/// outcomes via Pr[Y = 1 | history] and the expanded loss, unless
/// `strategy` forces a loss regression). At earlier t the current
/// pseudo-outcome is regressed on the history among followers through t
/// (Gaussian, floored at zero). Fitted values replace the pseudo-outcome for
/// every subject following through t − 1; the estimate is their mean at
/// t = 0 over all subjects.
pub fn loss_ice_sequential(
    data: &SequentialDataset,
    regime: &SequentialRegime,
    specs: &HistorySpecs,
    model: &dyn Predictor,
    loss: Loss,
    strategy: CondLossStrategy,
) -> Result<PerfEstimate> {
    data.check_regime(regime)?;
    let k_max = data.horizon;
    let flags = follower_flags(data, regime);
    let n = data.len();
    let pred: Vec<f64> = data.rows.iter().map(|r| model.predict(r.baseline())).collect::<Result<_>>()?;
    let mut pseudo: Vec<f64> = data.rows.iter().zip(&pred).map(|(r, p)| loss.eval(r.y, *p)).collect();
    for t in (0..=k_max).rev() {
        let fit_rows: Vec<usize> = (0..n).filter(|&i| flags[i][t]).collect();
        if fit_rows.is_empty() {
            return Err(Error::Positivity(format!("no subjects follow the regime through time {t}")));
        }
        let features: Vec<Vec<f64>> = data.rows.iter().map(|r| r.history(t, specs.include_treatments)).collect();
        let spec = specs.at(t, k_max)?;
        let x: Vec<&[f64]> = fit_rows.iter().map(|&i| features[i].as_slice()).collect();
        let ones = vec![1.0; x.len()];
        let h = if t == k_max && data.outcome == OutcomeKind::Binary && strategy == CondLossStrategy::Auto {
            let y: Vec<f64> = fit_rows.iter().map(|&i| data.rows[i].y).collect();
            let outcome = fit_glm_rows(spec, &x, &y, &ones, Family::BinomialLogit)?;
            if !outcome.converged {
                log::warn!("outcome model at time {t} did not converge");
            }
            CondLossModel::OutcomeProbability { outcome, loss }
        } else {
            let z: Vec<f64> = fit_rows.iter().map(|&i| pseudo[i]).collect();
            CondLossModel::LossRegression { fit: fit_glm_rows(spec, &x, &z, &ones, Family::Gaussian)? }
        };
        for i in 0..n {
            if t == 0 || flags[i][t - 1] {
                pseudo[i] = h.value(&features[i], pred[i])?;
            }
        }
    }
    let value = pseudo.iter().sum::<f64>() / n as f64;
    let mut est = PerfEstimate::scalar(EstimatorKind::CL, Measure::Loss(loss), sequential_label(regime), value, n);
    est.followers = Some(follower_counts(&flags, k_max));
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::SIMULATION_CLIP;

    fn subject(id: usize, x: [f64; 2], a: [u8; 2], y: f64) -> SequentialObservation {
        SequentialObservation::new(id.to_string(), vec![vec![x[0]], vec![x[1]]], a.to_vec(), y)
    }

    fn toy() -> SequentialDataset {
        let mut rows = Vec::new();
        let mut id = 0;
        for x0 in [0.0, 1.0] {
            for x1 in [0.0, 1.0] {
                for a0 in [0, 1] {
                    for a1 in [0, 1] {
                        for y in [0.0, 1.0] {
                            rows.push(subject(id, [x0, x1], [a0, a1], y));
                            id += 1;
                        }
                    }
                }
            }
        }
        SequentialDataset::new(rows, OutcomeKind::Binary).unwrap()
    }

    #[test]
    fn balanced_design_gives_weight_four() {
        // Every treatment probability is one half, so followers get 2 × 2.
        let d = toy();
        let g = SequentialRegime::always(0, 1).unwrap();
        let w = sequential_weights(&d, &g, &HistorySpecs::main_effects(1, 1), None, SIMULATION_CLIP).unwrap();
        for (r, w) in d.rows().iter().zip(&w.weights) {
            let expect = if r.a_hist == [0, 0] { 4.0 } else { 0.0 };
            assert!((w - expect).abs() < 1e-9, "{w} vs {expect}");
        }
        assert_eq!(w.followers, vec![16, 8]);
        assert!(w.weights.iter().filter(|w| **w > 0.0).all(|w| *w >= 1.0));
    }

    #[test]
    fn constant_pseudo_outcome_passes_through() {
        let d = SequentialDataset::new(
            toy().rows().iter().map(|r| SequentialObservation { y: 3.0, ..r.clone() }).collect(),
            OutcomeKind::Continuous,
        )
        .unwrap();
        let g = SequentialRegime::always(1, 1).unwrap();
        let zero = |_: &[f64]| 1.0;
        let est = loss_ice_sequential(&d, &g, &HistorySpecs::main_effects(1, 1), &zero, Loss::Squared, CondLossStrategy::Auto)
            .unwrap();
        assert!((est.value.unwrap() - 4.0).abs() < 1e-10);
        assert_eq!(est.followers, Some(vec![16, 8]));
    }

    #[test]
    fn no_followers_is_positivity_error() {
        let rows = (0..6).map(|i| subject(i, [i as f64, 0.0], [1, 1], 0.0)).collect();
        let d = SequentialDataset::new(rows, OutcomeKind::Binary).unwrap();
        let g = SequentialRegime::always(0, 1).unwrap();
        let specs = HistorySpecs::main_effects(1, 1);
        assert!(matches!(sequential_weights(&d, &g, &specs, None, SIMULATION_CLIP), Err(Error::Positivity(_))));
        let m = |_: &[f64]| 0.5;
        assert!(matches!(
            loss_ice_sequential(&d, &g, &specs, &m, Loss::Squared, CondLossStrategy::Auto),
            Err(Error::Positivity(_))
        ));
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let d = toy();
        let g = SequentialRegime::always(0, 2).unwrap();
        assert!(matches!(
            sequential_weights(&d, &g, &HistorySpecs::main_effects(1, 1), None, SIMULATION_CLIP),
            Err(Error::InvalidRegime(_))
        ));
    }

    #[test]
    fn ragged_histories_are_rejected() {
        let rows = vec![
            SequentialObservation::new("a", vec![vec![0.0], vec![1.0]], vec![0, 0], 0.0),
            SequentialObservation::new("b", vec![vec![0.0]], vec![0], 0.0),
        ];
        assert!(SequentialDataset::new(rows, OutcomeKind::Binary).is_err());
    }

    #[test]
    fn history_layout() {
        let r = subject(0, [2.0, 3.0], [1, 0], 0.0);
        assert_eq!(r.history(1, false), vec![2.0, 3.0]);
        assert_eq!(r.history(1, true), vec![2.0, 3.0, 1.0]);
        assert_eq!(r.history(0, true), vec![2.0]);
    }
}
