//! Nuisance functions for counterfactual performance estimation, always fit
//! on the test split: the treatment probability ê_a(X) = Pr[A = a | X] and
//! the conditional loss ĥ_a(X) = E[L(Y, μ̂(X*)) | X, A = a].

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Loss, OutcomeKind};
use crate::error::{Error, Result};
use crate::glm::{fit_glm_rows, predict_glm, DesignSpec, Family, GlmFit};
use crate::tailor::{arm_probability, Predictor};

/// Probability bounds used for real-data workflows.
pub const DEFAULT_CLIP: (f64, f64) = (0.01, 0.99);
/// Probability bounds used when reproducing simulation studies.
pub const SIMULATION_CLIP: (f64, f64) = (1e-6, 1.0 - 1e-6);

/// ê_a(X).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityModel {
    /// Logistic model for Pr[A = 1 | X]; reports the clipped arm probability.
    Fitted { fit: GlmFit, target_a: u8, clip: (f64, f64) },
    /// A known constant Pr[A = a | X] in (0, 1], e.g. from a design.
    Known(f64),
}

impl PropensityModel {
    pub fn known(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidArgument(format!("known treatment probability must lie in (0, 1], got {p}")));
        }
        Ok(PropensityModel::Known(p))
    }

    /// ê_a(x); fitted values are clipped into `clip`.
    pub fn prob(&self, x: &[f64]) -> Result<f64> {
        match self {
            PropensityModel::Fitted { fit, target_a, clip } => arm_probability(fit, x, *target_a, *clip),
            PropensityModel::Known(p) => Ok(*p),
        }
    }

    /// The same fitted model viewed from the other arm.
    pub fn for_arm(&self, a: u8) -> Self {
        match self {
            PropensityModel::Fitted { fit, clip, .. } => {
                PropensityModel::Fitted { fit: fit.clone(), target_a: a, clip: *clip }
            }
            PropensityModel::Known(p) => PropensityModel::Known(*p),
        }
    }
}

/// Logistic fit of A on `spec` over the test rows.
pub fn fit_propensity(test: &Dataset, spec: &DesignSpec, target_a: u8, clip: (f64, f64)) -> Result<PropensityModel> {
    if !(clip.0 > 0.0 && clip.0 <= clip.1 && clip.1 < 1.0) {
        return Err(Error::InvalidArgument(format!("clip bounds {clip:?} must satisfy 0 < lo <= hi < 1")));
    }
    let n1 = test.count_treated(1);
    let at_target = test.count_treated(target_a);
    if !test.is_empty() && at_target == test.len() {
        // Every row already receives a: Pr[A = a | X] = 1 is the exact fit.
        log::info!("all test rows have A = {target_a}; using a treatment probability of 1");
        return Ok(PropensityModel::Known(1.0));
    }
    if n1 == 0 || n1 == test.len() {
        return Err(Error::Positivity(format!(
            "no test rows with A = {target_a}; test set has {n1} treated of {}",
            test.len()
        )));
    }
    let a: Vec<f64> = test.rows().iter().map(|r| f64::from(r.a)).collect();
    let fit = fit_glm_rows(spec, &test.covariates(), &a, &vec![1.0; test.len()], Family::BinomialLogit)?;
    if !fit.converged {
        log::warn!("propensity model did not converge");
    }
    Ok(PropensityModel::Fitted { fit, target_a, clip })
}

/// ĥ_a(X).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CondLossModel {
    /// Binary Y: q̂(x) = Pr[Y = 1 | X, A = a] and
    /// ĥ = q̂ L(1, μ̂) + (1 − q̂) L(0, μ̂).
    OutcomeProbability { outcome: GlmFit, loss: Loss },
    /// Direct regression of observed losses on X, floored at zero.
    LossRegression { fit: GlmFit },
    Constant(f64),
}

impl CondLossModel {
    /// ĥ_a(x) for a row whose model prediction is `pred`.
    pub fn value(&self, x: &[f64], pred: f64) -> Result<f64> {
        match self {
            CondLossModel::OutcomeProbability { outcome, loss } => {
                let q = predict_glm(outcome, x)?;
                Ok(expected_binary_loss(*loss, q, pred))
            }
            CondLossModel::LossRegression { fit } => Ok(predict_glm(fit, x)?.max(0.0)),
            CondLossModel::Constant(c) => Ok(*c),
        }
    }

    /// q̂_a(x) when the model is built from an outcome probability.
    pub fn outcome_prob(&self, x: &[f64]) -> Result<Option<f64>> {
        match self {
            CondLossModel::OutcomeProbability { outcome, .. } => Ok(Some(predict_glm(outcome, x)?)),
            _ => Ok(None),
        }
    }
}

/// E[L(Y, p)] for Y ~ Bernoulli(q).
#[inline]
pub fn expected_binary_loss(loss: Loss, q: f64, p: f64) -> f64 {
    q * loss.eval(1.0, p) + (1.0 - q) * loss.eval(0.0, p)
}

/// How ĥ is estimated for binary outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CondLossStrategy {
    /// Model Pr[Y = 1 | X, A = a] and expand the loss (binary outcomes);
    /// regress losses directly otherwise.
    #[default]
    Auto,
    /// Always regress observed losses (Gaussian identity, floored at 0).
    LossRegression,
}

/// Fits ĥ_a on the A = a test rows.
pub fn fit_cond_loss(
    test: &Dataset,
    model: &dyn Predictor,
    spec: &DesignSpec,
    target_a: u8,
    loss: Loss,
) -> Result<CondLossModel> {
    fit_cond_loss_with(test, model, spec, target_a, loss, CondLossStrategy::Auto)
}

pub fn fit_cond_loss_with(
    test: &Dataset,
    model: &dyn Predictor,
    spec: &DesignSpec,
    target_a: u8,
    loss: Loss,
    strategy: CondLossStrategy,
) -> Result<CondLossModel> {
    let arm = test.filter(|r| r.a == target_a);
    if arm.is_empty() {
        return Err(Error::Positivity(format!("no test rows with A = {target_a} for the conditional-loss model")));
    }
    let ones = vec![1.0; arm.len()];
    if test.outcome() == OutcomeKind::Binary && strategy == CondLossStrategy::Auto {
        let outcome = fit_glm_rows(spec, &arm.covariates(), &arm.outcomes(), &ones, Family::BinomialLogit)?;
        if !outcome.converged {
            log::warn!("outcome model for the conditional loss did not converge");
        }
        return Ok(CondLossModel::OutcomeProbability { outcome, loss });
    }
    let losses: Vec<f64> =
        arm.rows().iter().map(|r| Ok(loss.eval(r.y, model.predict(&r.x)?))).collect::<Result<_>>()?;
    let fit = fit_glm_rows(spec, &arm.covariates(), &losses, &ones, Family::Gaussian)?;
    Ok(CondLossModel::LossRegression { fit })
}

/// Model specifications for both nuisance functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSpecs {
    pub propensity: DesignSpec,
    pub cond_loss: DesignSpec,
    #[serde(default = "default_clip")]
    pub clip: (f64, f64),
    #[serde(default)]
    pub strategy: CondLossStrategy,
}

fn default_clip() -> (f64, f64) {
    DEFAULT_CLIP
}

/// Both nuisance functions for one target arm and loss. Either component
/// may be absent; estimators that need it report `MissingNuisance`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSet {
    pub target_a: u8,
    pub loss: Loss,
    pub propensity: Option<PropensityModel>,
    pub cond_loss: Option<CondLossModel>,
}

impl NuisanceSet {
    pub fn new(target_a: u8, loss: Loss) -> Self {
        Self { target_a, loss, propensity: None, cond_loss: None }
    }

    pub fn with_propensity(mut self, p: PropensityModel) -> Self {
        self.propensity = Some(p);
        self
    }

    pub fn with_cond_loss(mut self, h: CondLossModel) -> Self {
        self.cond_loss = Some(h);
        self
    }

    /// Fits both components on `test`.
    pub fn fit(test: &Dataset, model: &dyn Predictor, specs: &NuisanceSpecs, target_a: u8, loss: Loss) -> Result<Self> {
        let propensity = fit_propensity(test, &specs.propensity, target_a, specs.clip)?;
        let cond_loss = fit_cond_loss_with(test, model, &specs.cond_loss, target_a, loss, specs.strategy)?;
        Ok(Self { target_a, loss, propensity: Some(propensity), cond_loss: Some(cond_loss) })
    }

    pub fn propensity(&self) -> Result<&PropensityModel> {
        self.propensity.as_ref().ok_or(Error::MissingNuisance("propensity"))
    }

    pub fn cond_loss(&self) -> Result<&CondLossModel> {
        self.cond_loss.as_ref().ok_or(Error::MissingNuisance("conditional loss"))
    }
}
