//! Counterfactual performance estimators.
//!
//! Loss-based measures (naive, conditional loss, weighting, doubly robust;
//! static and stochastic regimes), the AUC (naive, outcome model,
//! weighting), calibration curves and counterfactual cross-validation.

mod auc;
mod calibration;
mod cv;
mod loss;

use serde::{Deserialize, Serialize};

pub use auc::{auc_estimate, pairwise_auc, AucKind};
pub use calibration::{calibration_curve, calibration_csv, CalPoint, CalibrationKind, CalibrationMethod};
pub use cv::{cv_select, CvResult, ModelRecipe, RecipeMethod};
pub use loss::{
    dr_mean, ipw_mean, loss_cl, loss_dr, loss_estimate, loss_ipw, loss_naive, loss_stochastic, StochasticKind,
};

use crate::data::Loss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Naive,
    #[serde(rename = "cl")]
    CL,
    #[serde(rename = "ipw")]
    IPW,
    #[serde(rename = "dr")]
    DR,
    #[serde(rename = "om")]
    OM,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::CL => "cl",
            EstimatorKind::IPW => "ipw",
            EstimatorKind::DR => "dr",
            EstimatorKind::OM => "om",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Loss(Loss),
    Auc,
    Calibration,
}

/// One performance estimate, serialized as a result record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfEstimate {
    #[serde(rename = "estimator")]
    pub kind: EstimatorKind,
    pub measure: Measure,
    pub regime: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub curve: Option<Vec<CalPoint>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub se: Option<f64>,
    pub n_test: usize,
    /// Rows following a sequential regime through each time point.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub followers: Option<Vec<usize>>,
}

impl PerfEstimate {
    pub(crate) fn scalar(kind: EstimatorKind, measure: Measure, regime: String, value: f64, n_test: usize) -> Self {
        Self { kind, measure, regime, value: Some(value), curve: None, se: None, n_test, followers: None }
    }

    /// Point value; NaN for curves.
    pub fn value_or_nan(&self) -> f64 {
        self.value.unwrap_or(f64::NAN)
    }
}
