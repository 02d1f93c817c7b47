//! Prediction models tailored to a counterfactual treatment level.
//!
//! Two routes target μ_a(X*) = E[Y^a | X*]:
//!
//! * **standardization** – fit E[Y | X, A = a] on the treated-at-`a` rows,
//!   then regress those fitted means (or draws from the fitted model) on X*
//!   over all training rows;
//! * **inverse probability weighting** – fit the model for Y on X* with
//!   weights I(A = a) / Pr[A = a | X].
//!
//! All functions use every row of the dataset they are given; pass the
//! training split explicitly.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, OutcomeKind, PredictorSubset};
use crate::error::{Error, Result};
use crate::glm::{clip_prob, fit_glm_rows, predict_glm, DesignSpec, Family, GlmFit};
use crate::regime::Target;
use crate::rng::{stream_rng, streams};

/// Anything that maps a full covariate vector X to a prediction μ̂(X*).
pub trait Predictor: Sync {
    fn predict(&self, x: &[f64]) -> Result<f64>;

    fn predict_all(&self, data: &Dataset) -> Result<Vec<f64>> {
        data.rows().iter().map(|r| self.predict(&r.x)).collect()
    }
}

impl<F> Predictor for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Plain,
    Standardized,
    StandardizedDraws,
    IpwWeighted,
}

/// What the second stage of standardization regresses on X*.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTwoTargets {
    #[default]
    FittedMeans,
    /// One simulated outcome per row from the stage-one model.
    Draws { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailorOptions {
    /// Bounds applied to fitted Pr[A = a | X] before inverting.
    pub clip: (f64, f64),
    /// Cap weights at this quantile of the nonzero weights; `None` disables.
    pub truncate_quantile: Option<f64>,
    pub stage_two: StageTwoTargets,
}

impl Default for TailorOptions {
    fn default() -> Self {
        Self { clip: (1e-6, 1.0 - 1e-6), truncate_quantile: Some(0.995), stage_two: StageTwoTargets::FittedMeans }
    }
}

impl TailorOptions {
    /// Settings for reproducing simulation studies: no truncation.
    pub fn untruncated() -> Self {
        Self { truncate_quantile: None, ..Self::default() }
    }
}

/// A fitted prediction model μ̂(X*) with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub inner: GlmFit,
    pub predictors: PredictorSubset,
    pub target: Target,
    pub method: FitMethod,
    /// Clamp predictions to [0, 1] (Gaussian second stages on binary outcomes).
    #[serde(default)]
    pub clip_unit: bool,
}

impl FittedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Predictor for FittedModel {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        let xs = self.predictors.project(x)?;
        let p = predict_glm(&self.inner, &xs)?;
        Ok(if self.clip_unit { p.clamp(0.0, 1.0) } else { p })
    }
}

fn projected(data: &Dataset, sel: &PredictorSubset) -> Result<Vec<Vec<f64>>> {
    data.rows().iter().map(|r| sel.project(&r.x)).collect()
}

fn as_refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
    rows.iter().map(Vec::as_slice).collect()
}

/// Untailored model of Y on X*, targeting the natural course.
pub fn fit_plain(train: &Dataset, predictors: &PredictorSubset, spec: &DesignSpec, family: Family) -> Result<FittedModel> {
    let xs = projected(train, predictors)?;
    let inner = fit_glm_rows(spec, &as_refs(&xs), &train.outcomes(), &vec![1.0; train.len()], family)?;
    Ok(FittedModel {
        inner,
        predictors: predictors.clone(),
        target: Target::NaturalCourse,
        method: FitMethod::Plain,
        clip_unit: false,
    })
}

/// Pr[A = a | x] from a logistic fit of A = 1, clipped.
pub(crate) fn arm_probability(fit: &GlmFit, x: &[f64], target_a: u8, clip: (f64, f64)) -> Result<f64> {
    let p1 = predict_glm(fit, x)?;
    let pa = if target_a == 1 { p1 } else { 1.0 - p1 };
    Ok(clip_prob(pa, clip))
}

fn check_target(target_a: u8) -> Result<()> {
    if target_a > 1 {
        return Err(Error::InvalidArgument(format!("target treatment {target_a} is not binary")));
    }
    Ok(())
}

/// Caps weights at the `q` quantile of the nonzero weights.
pub fn truncate_weights(weights: &mut [f64], q: f64) {
    let mut nonzero: Vec<f64> = weights.iter().copied().filter(|w| *w > 0.0).collect();
    if nonzero.is_empty() {
        return;
    }
    nonzero.sort_by(f64::total_cmp);
    let cap = crate::glm::spline::quantile_sorted(&nonzero, q);
    for w in weights.iter_mut() {
        if *w > cap {
            *w = cap;
        }
    }
}

/// Inverse-probability weights I(A = a) / Pr̂[A = a | X] on `data`.
///
/// When every row already has A = a the treatment probability is exactly 1
/// and no propensity model is fit.
pub fn treatment_weights(data: &Dataset, target_a: u8, propensity_spec: &DesignSpec, clip: (f64, f64)) -> Result<Vec<f64>> {
    check_target(target_a)?;
    let n_target = data.count_treated(target_a);
    if n_target == 0 {
        return Err(Error::Positivity(format!("no rows with A = {target_a}")));
    }
    if n_target == data.len() {
        return Ok(vec![1.0; data.len()]);
    }
    let a: Vec<f64> = data.rows().iter().map(|r| f64::from(r.a)).collect();
    let ps = fit_glm_rows(propensity_spec, &data.covariates(), &a, &vec![1.0; data.len()], Family::BinomialLogit)?;
    if !ps.converged {
        log::warn!("propensity model for tailoring did not converge");
    }
    data.rows()
        .iter()
        .map(|r| {
            if r.a == target_a {
                Ok(1.0 / arm_probability(&ps, &r.x, target_a, clip)?)
            } else {
                Ok(0.0)
            }
        })
        .collect()
}

/// Weighted fit of Y on X* with weights I(A = a) / Pr̂[A = a | X].
pub fn fit_tailored_ipw(
    train: &Dataset,
    target_a: u8,
    propensity_spec: &DesignSpec,
    predictors: &PredictorSubset,
    model_spec: &DesignSpec,
    family: Family,
    opts: &TailorOptions,
) -> Result<FittedModel> {
    let mut w = treatment_weights(train, target_a, propensity_spec, opts.clip)?;
    if let Some(q) = opts.truncate_quantile {
        truncate_weights(&mut w, q);
    }
    let xs = projected(train, predictors)?;
    let inner = fit_glm_rows(model_spec, &as_refs(&xs), &train.outcomes(), &w, family)?;
    if !inner.converged {
        log::warn!("weighted prediction model did not converge");
    }
    Ok(FittedModel {
        inner,
        predictors: predictors.clone(),
        target: Target::Counterfactual { a: target_a },
        method: FitMethod::IpwWeighted,
        clip_unit: false,
    })
}

/// Two-stage standardization: E[Y | X, A = a] on the A = a rows, then the
/// stage-one predictions over all training rows regressed on X*.
pub fn fit_tailored_standardized(
    train: &Dataset,
    target_a: u8,
    outcome_spec: &DesignSpec,
    predictors: &PredictorSubset,
    second_stage_spec: &DesignSpec,
    family: Family,
    opts: &TailorOptions,
) -> Result<FittedModel> {
    check_target(target_a)?;
    let arm = train.filter(|r| r.a == target_a);
    if arm.is_empty() {
        return Err(Error::Positivity(format!("no training rows with A = {target_a}")));
    }
    let stage_one = fit_glm_rows(outcome_spec, &arm.covariates(), &arm.outcomes(), &vec![1.0; arm.len()], family)?;
    if !stage_one.converged {
        log::warn!("stage-one outcome model did not converge");
    }
    let target = Target::Counterfactual { a: target_a };
    let method = match opts.stage_two {
        StageTwoTargets::FittedMeans => FitMethod::Standardized,
        StageTwoTargets::Draws { .. } => FitMethod::StandardizedDraws,
    };
    if predictors.is_identity(train.dim()) && opts.stage_two == StageTwoTargets::FittedMeans {
        return Ok(FittedModel { inner: stage_one, predictors: predictors.clone(), target, method, clip_unit: false });
    }

    let means: Vec<f64> = train.rows().iter().map(|r| predict_glm(&stage_one, &r.x)).collect::<Result<_>>()?;
    let (targets, stage_two_family) = match opts.stage_two {
        StageTwoTargets::FittedMeans => (means, Family::Gaussian),
        StageTwoTargets::Draws { seed } => {
            let mut rng = stream_rng(seed, streams::DRAWS);
            let draws = match family {
                Family::BinomialLogit => means.iter().map(|m| f64::from(u8::from(rng.random::<f64>() < *m))).collect(),
                Family::Gaussian => {
                    let sigma = residual_sd(&stage_one, &arm)?;
                    means
                        .iter()
                        .map(|m| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            m + sigma * z
                        })
                        .collect()
                }
            };
            (draws, family)
        }
    };
    let xs = projected(train, predictors)?;
    let inner = fit_glm_rows(second_stage_spec, &as_refs(&xs), &targets, &vec![1.0; train.len()], stage_two_family)?;
    let clip_unit = train.outcome() == OutcomeKind::Binary && stage_two_family == Family::Gaussian;
    Ok(FittedModel { inner, predictors: predictors.clone(), target, method, clip_unit })
}

fn residual_sd(fit: &GlmFit, data: &Dataset) -> Result<f64> {
    let p = fit.coefficients.len();
    let n = data.len();
    let mut rss = 0.0;
    for r in data.rows() {
        let e = r.y - predict_glm(fit, &r.x)?;
        rss += e * e;
    }
    Ok((rss / (n.saturating_sub(p).max(1)) as f64).sqrt())
}
