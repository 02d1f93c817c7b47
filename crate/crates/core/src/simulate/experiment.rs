use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::dgp::{truth_oracle, Dgp, DgpKind, Exp1Options, TruthMeasure};
use crate::data::{split_dataset, Dataset, Loss, PredictorSubset};
use crate::error::{Error, Result};
use crate::glm::{DesignSpec, Family};
use crate::inference::{mc_summarize, McSummary};
use crate::nuisance::{fit_cond_loss, fit_propensity, NuisanceSet, SIMULATION_CLIP};
use crate::parallel::{map_indexed, Parallelism};
use crate::perf::{auc_estimate, loss_cl, loss_dr, loss_ipw, loss_naive, AucKind};
use crate::rng::replicate_seed;
use crate::tailor::{fit_plain, fit_tailored_ipw, FittedModel, TailorOptions};

/// Version tag written into every output document.
pub const SCHEMA_VERSION: &str = "1";

/// Largest fraction of Monte Carlo replicates that may fail.
pub const MAX_REPLICATE_FAILURES: f64 = 0.01;

/// Spline degrees of freedom for the flexible nuisance models.
pub const FLEXIBLE_DF: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    One,
    Two,
}

impl Experiment {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Experiment::One),
            2 => Ok(Experiment::Two),
            _ => Err(Error::InvalidArgument(format!("unknown experiment {id}; expected 1 or 2"))),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Experiment::One => 1,
            Experiment::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    pub parallelism: Parallelism,
    pub exp1: Exp1Options,
}

impl RunOptions {
    pub fn new(reps: usize, n: usize, seed: u64) -> Self {
        Self { reps, n, seed, parallelism: Parallelism::Parallel, exp1: Exp1Options::default() }
    }
}

/// Identifies one column of per-replicate values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellKey {
    pub scenario: String,
    pub estimator: String,
    pub measure: String,
}

impl CellKey {
    fn new(scenario: &str, estimator: &str, measure: &str) -> Self {
        Self { scenario: scenario.into(), estimator: estimator.into(), measure: measure.into() }
    }
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    #[serde(flatten)]
    pub key: CellKey,
    pub mean: f64,
    pub sd: f64,
    pub sqrt_n_sd: f64,
    pub bias: f64,
    pub sqrt_n_bias: f64,
    /// 100 × relative bias.
    pub percent: f64,
    /// Monte Carlo standard error of `mean`.
    pub mc_se: f64,
    pub truth: f64,
}

impl TableRow {
    fn from_summary(key: CellKey, s: &McSummary) -> Self {
        Self {
            key,
            mean: s.mean,
            sd: s.sd,
            sqrt_n_sd: s.sqrt_n_sd,
            bias: s.bias,
            sqrt_n_bias: s.sqrt_n_bias,
            percent: 100.0 * s.rel_bias,
            mc_se: s.sd / (s.reps as f64).sqrt(),
            truth: s.truth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub schema_version: String,
    pub experiment: u8,
    pub reps: usize,
    pub failed: usize,
    pub n: usize,
    pub seed: u64,
    /// Mean realized test-set size (rounded) used for the √n scaling.
    pub n_test: usize,
    pub rows: Vec<TableRow>,
}

impl ExperimentTable {
    pub fn row(&self, scenario: &str, estimator: &str, measure: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.key.scenario == scenario && r.key.estimator == estimator && r.key.measure == measure)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario,estimator,measure,mean,sd,sqrt_n_sd,bias,sqrt_n_bias,percent,mc_se,truth\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.key.scenario,
                r.key.estimator,
                r.key.measure,
                r.mean,
                r.sd,
                r.sqrt_n_sd,
                r.bias,
                r.sqrt_n_bias,
                r.percent,
                r.mc_se,
                r.truth
            );
        }
        s
    }
}

/// Table plus the per-replicate values behind every row.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: ExperimentTable,
    pub keys: Vec<CellKey>,
    /// `values[c][r]`: column `c` of successful replicate `r`.
    pub values: Vec<Vec<f64>>,
}

impl ExperimentOutput {
    pub fn values(&self, scenario: &str, estimator: &str, measure: &str) -> Option<&[f64]> {
        self.keys
            .iter()
            .position(|k| k.scenario == scenario && k.estimator == estimator && k.measure == measure)
            .map(|c| self.values[c].as_slice())
    }
}

/// Values of one replicate, aligned with the experiment's key list.
struct Replicate {
    values: Vec<f64>,
    n_test: usize,
}

fn split_half(data: Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let d = split_dataset(data, 0.5, seed)?;
    let (train, test) = (d.train(), d.test());
    if train.is_empty() || test.is_empty() {
        return Err(Error::Data("empty split".into()));
    }
    Ok((train, test))
}

const EXP1_MODELS: [(&str, &str); 4] = [("correct", "ols"), ("correct", "wls"), ("misspecified", "ols"), ("misspecified", "wls")];

fn exp1_keys() -> Vec<CellKey> {
    let mut keys = Vec::new();
    for (spec, fit) in EXP1_MODELS {
        let scenario = format!("{spec}_{fit}");
        for est in ["naive", "ipw", "truth"] {
            keys.push(CellKey::new(&scenario, est, "mse"));
        }
    }
    keys
}

fn exp1_replicate(opts: &RunOptions, r: usize) -> Result<Replicate> {
    let seed = replicate_seed(opts.seed, r as u64);
    let dgp = Dgp::new(DgpKind::Exp1(opts.exp1), opts.n, seed)?;
    let (train, test) = split_half(dgp.generate(), seed)?;
    let sel = PredictorSubset::all(1);
    let ps_spec = DesignSpec::linear([0]);
    let tailor = TailorOptions::untruncated();
    let e0 = fit_propensity(&test, &ps_spec, 0, SIMULATION_CLIP)?;
    let nuis = NuisanceSet::new(0, Loss::Squared).with_propensity(e0);
    let mut values = Vec::with_capacity(12);
    for (spec_name, fit_name) in EXP1_MODELS {
        let spec = if spec_name == "correct" { DesignSpec::quadratic([0]) } else { DesignSpec::linear([0]) };
        let model = if fit_name == "ols" {
            fit_plain(&train, &sel, &spec, Family::Gaussian)?
        } else {
            fit_tailored_ipw(&train, 0, &ps_spec, &sel, &spec, Family::Gaussian, &tailor)?
        };
        values.push(loss_naive(&test, &model, Loss::Squared)?.value_or_nan());
        values.push(loss_ipw(&test, &model, &nuis)?.value_or_nan());
        values.push(truth_oracle(&dgp, &model, TruthMeasure::Loss(Loss::Squared), 0)?);
    }
    Ok(Replicate { values, n_test: test.len() })
}

/// Nuisance scenarios of Experiment 2: (name, propensity spec, outcome spec).
fn exp2_scenarios() -> [(&'static str, DesignSpec, DesignSpec); 4] {
    let cols = [0, 1, 2];
    let correct = DesignSpec::quadratic(cols);
    let wrong = DesignSpec::linear(cols);
    let flexible = DesignSpec::additive_splines(cols, FLEXIBLE_DF);
    [
        ("correct", correct.clone(), correct.clone()),
        ("e_misspecified", wrong.clone(), correct.clone()),
        ("h_misspecified", correct, wrong),
        ("flexible", flexible.clone(), flexible),
    ]
}

fn exp2_keys() -> Vec<CellKey> {
    let mut keys = Vec::new();
    for (scenario, ..) in exp2_scenarios() {
        for est in ["naive", "cl", "ipw", "dr"] {
            keys.push(CellKey::new(scenario, est, "mse"));
            if est != "dr" {
                keys.push(CellKey::new(scenario, est, "auc"));
            }
        }
    }
    keys.push(CellKey::new("truth", "truth", "mse"));
    keys.push(CellKey::new("truth", "truth", "auc"));
    keys
}

/// The Experiment-2 prediction model: main-effects logistic regression
/// fit on the training split.
pub fn exp2_model(train: &Dataset) -> Result<FittedModel> {
    fit_plain(train, &PredictorSubset::all(3), &DesignSpec::linear([0, 1, 2]), Family::BinomialLogit)
}

fn exp2_replicate(opts: &RunOptions, r: usize) -> Result<Replicate> {
    let seed = replicate_seed(opts.seed, r as u64);
    let dgp = Dgp::new(DgpKind::Exp2, opts.n, seed)?;
    let (train, test) = split_half(dgp.generate(), seed)?;
    let model = exp2_model(&train)?;
    let naive_mse = loss_naive(&test, &model, Loss::Squared)?.value_or_nan();
    let naive_auc = auc_estimate(&test, &model, AucKind::Naive, None)?.value_or_nan();
    let mut values = Vec::with_capacity(30);
    for (_, e_spec, h_spec) in exp2_scenarios() {
        let nuis = NuisanceSet::new(0, Loss::Squared)
            .with_propensity(fit_propensity(&test, &e_spec, 0, SIMULATION_CLIP)?)
            .with_cond_loss(fit_cond_loss(&test, &model, &h_spec, 0, Loss::Squared)?);
        values.extend([naive_mse, naive_auc]);
        values.push(loss_cl(&test, &model, &nuis)?.value_or_nan());
        values.push(auc_estimate(&test, &model, AucKind::OM, Some(&nuis))?.value_or_nan());
        values.push(loss_ipw(&test, &model, &nuis)?.value_or_nan());
        values.push(auc_estimate(&test, &model, AucKind::IPW, Some(&nuis))?.value_or_nan());
        values.push(loss_dr(&test, &model, &nuis)?.value_or_nan());
    }
    values.push(truth_oracle(&dgp, &model, TruthMeasure::Loss(Loss::Squared), 0)?);
    values.push(truth_oracle(&dgp, &model, TruthMeasure::Auc, 0)?);
    Ok(Replicate { values, n_test: test.len() })
}

/// Runs the Monte Carlo study and summarizes every estimator against the
/// truth averaged over replicates.
pub fn run_experiment(which: Experiment, opts: &RunOptions) -> Result<ExperimentOutput> {
    if opts.reps == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    if opts.n < 4 {
        return Err(Error::InvalidArgument(format!("sample size {} is too small", opts.n)));
    }
    let keys = match which {
        Experiment::One => exp1_keys(),
        Experiment::Two => exp2_keys(),
    };
    let results = map_indexed(opts.reps, opts.parallelism, |r| match which {
        Experiment::One => exp1_replicate(opts, r),
        Experiment::Two => exp2_replicate(opts, r),
    });
    let mut ok = Vec::with_capacity(opts.reps);
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(rep) if rep.values.iter().all(|v| v.is_finite()) => ok.push(rep),
            Ok(_) => log::warn!("replicate {r} produced a non-finite estimate"),
            Err(e) => log::warn!("replicate {r} failed: {e}"),
        }
    }
    let failed = opts.reps - ok.len();
    if ok.is_empty() || failed as f64 > MAX_REPLICATE_FAILURES * opts.reps as f64 {
        return Err(Error::ReplicateFailures {
            failed,
            total: opts.reps,
            context: format!("experiment {}", which.id()),
        });
    }
    let n_test = (ok.iter().map(|r| r.n_test as f64).sum::<f64>() / ok.len() as f64).round() as usize;
    let values: Vec<Vec<f64>> = (0..keys.len()).map(|c| ok.iter().map(|r| r.values[c]).collect()).collect();

    let mut rows = Vec::with_capacity(keys.len());
    for (c, key) in keys.iter().enumerate() {
        let truth_col = match which {
            Experiment::One => keys
                .iter()
                .position(|k| k.scenario == key.scenario && k.estimator == "truth")
                .expect("every Experiment-1 model has a truth column"),
            Experiment::Two => keys
                .iter()
                .position(|k| k.scenario == "truth" && k.measure == key.measure)
                .expect("every Experiment-2 measure has a truth column"),
        };
        let truth = mean(&values[truth_col]);
        rows.push(TableRow::from_summary(key.clone(), &mc_summarize(&values[c], truth, n_test)?));
    }
    let table = ExperimentTable {
        schema_version: SCHEMA_VERSION.into(),
        experiment: which.id(),
        reps: opts.reps,
        failed,
        n: opts.n,
        seed: opts.seed,
        n_test,
        rows,
    };
    Ok(ExperimentOutput { table, keys, values })
}

fn mean(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.iter().sum::<f64>() / s.len() as f64
}
