use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{loss_estimate, EstimatorKind};
use crate::data::{Dataset, Loss, PredictorSubset};
use crate::error::{Error, Result};
use crate::glm::{DesignSpec, Family};
use crate::nuisance::{NuisanceSet, NuisanceSpecs};
use crate::rng::{stream_rng, streams};
use crate::tailor::{fit_plain, fit_tailored_ipw, fit_tailored_standardized, FittedModel, TailorOptions};

/// How a candidate model is fit on the training folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum RecipeMethod {
    Plain,
    Standardized { outcome_spec: DesignSpec },
    Ipw { propensity_spec: DesignSpec },
}

/// A candidate prediction model for cross-validated selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecipe {
    pub name: String,
    pub predictors: Vec<usize>,
    pub spec: DesignSpec,
    pub family: Family,
    #[serde(flatten)]
    pub method: RecipeMethod,
}

impl ModelRecipe {
    pub fn fit(&self, train: &Dataset, target_a: u8, opts: &TailorOptions) -> Result<FittedModel> {
        let sel = PredictorSubset::new(self.predictors.clone(), train.dim())?;
        match &self.method {
            RecipeMethod::Plain => fit_plain(train, &sel, &self.spec, self.family),
            RecipeMethod::Standardized { outcome_spec } => {
                fit_tailored_standardized(train, target_a, outcome_spec, &sel, &self.spec, self.family, opts)
            }
            RecipeMethod::Ipw { propensity_spec } => {
                fit_tailored_ipw(train, target_a, propensity_spec, &sel, &self.spec, self.family, opts)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub names: Vec<String>,
    /// Mean over folds of the estimated counterfactual loss.
    pub mean_loss: Vec<f64>,
    /// `fold_loss[c][k]`: candidate `c`, held-out fold `k`.
    pub fold_loss: Vec<Vec<f64>>,
    pub selected: usize,
}

/// K-fold counterfactual cross-validation: each candidate is fit on K − 1
/// folds and its loss under A = a is estimated on the held-out fold with
/// nuisances refit there. Ties go to the earlier candidate.
#[allow(clippy::too_many_arguments)]
pub fn cv_select(
    data: &Dataset,
    candidates: &[ModelRecipe],
    estimator: EstimatorKind,
    nuisance_specs: &NuisanceSpecs,
    target_a: u8,
    loss: Loss,
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate models".into()));
    }
    if folds < 2 || folds > data.len() {
        return Err(Error::InvalidArgument(format!("cannot form {folds} folds from {} rows", data.len())));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut stream_rng(seed, streams::FOLDS));
    let mut fold_of = vec![0; data.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let opts = TailorOptions::default();
    let mut fold_loss = vec![Vec::with_capacity(folds); candidates.len()];
    for k in 0..folds {
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != k).collect();
        let test_idx: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] == k).collect();
        let (train, test) = (data.select(&train_idx), data.select(&test_idx));
        for (c, cand) in candidates.iter().enumerate() {
            let model = cand.fit(&train, target_a, &opts)?;
            let nuis = match estimator {
                EstimatorKind::Naive => NuisanceSet::new(target_a, loss),
                _ => NuisanceSet::fit(&test, &model, nuisance_specs, target_a, loss)?,
            };
            fold_loss[c].push(loss_estimate(&test, &model, &nuis, estimator)?.value_or_nan());
        }
    }
    let mean_loss: Vec<f64> = fold_loss.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    let mut selected = 0;
    for (c, m) in mean_loss.iter().enumerate() {
        if *m < mean_loss[selected] {
            selected = c;
        }
    }
    Ok(CvResult { names: candidates.iter().map(|c| c.name.clone()).collect(), mean_loss, fold_loss, selected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Observation, OutcomeKind};

    #[test]
    fn picks_the_better_specification() {
        let rows = (0..120)
            .map(|i| {
                let x = i as f64 / 12.0;
                let a = u8::from(i % 3 == 0);
                Observation::new(vec![x], a, x * x + 0.1 * ((i * 7 % 5) as f64))
            })
            .collect();
        let d = Dataset::new(rows, OutcomeKind::Continuous).unwrap();
        let cands = vec![
            ModelRecipe {
                name: "linear".into(),
                predictors: vec![0],
                spec: DesignSpec::linear([0]),
                family: Family::Gaussian,
                method: RecipeMethod::Plain,
            },
            ModelRecipe {
                name: "quadratic".into(),
                predictors: vec![0],
                spec: DesignSpec::quadratic([0]),
                family: Family::Gaussian,
                method: RecipeMethod::Plain,
            },
        ];
        let specs = NuisanceSpecs {
            propensity: DesignSpec::linear([0]),
            cond_loss: DesignSpec::quadratic([0]),
            clip: (0.01, 0.99),
            strategy: Default::default(),
        };
        let r = cv_select(&d, &cands, EstimatorKind::DR, &specs, 0, Loss::Squared, 5, 1).unwrap();
        assert_eq!(r.selected, 1);
        assert_eq!(r.fold_loss[0].len(), 5);
        let again = cv_select(&d, &cands, EstimatorKind::DR, &specs, 0, Loss::Squared, 5, 1).unwrap();
        assert_eq!(r, again);
    }
}
