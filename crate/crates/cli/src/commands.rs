use std::fs::{self, File};
use std::path::{Path, PathBuf};

use cfpred::csv_io::{read_sequential_csv, read_static_csv};
use cfpred::data::{split_dataset, Dataset, Loss};
use cfpred::error::{Error, Result};
use cfpred::inference::{bootstrap, BootstrapResult, Resample};
use cfpred::longitudinal::{
    loss_ice_sequential, loss_ipw_sequential, loss_naive_sequential, sequential_weights, HistorySpecs,
    SequentialDataset,
};
use cfpred::nuisance::{fit_cond_loss_with, fit_propensity, NuisanceSet, NuisanceSpecs};
use cfpred::parallel::Parallelism;
use cfpred::perf::{
    auc_estimate, calibration_csv, calibration_curve, cv_select, loss_estimate, loss_naive, loss_stochastic, AucKind,
    CalibrationKind, EstimatorKind, PerfEstimate, StochasticKind,
};
use cfpred::regime::Regime;
use cfpred::simulate::{run_experiment, Exp1Options, Experiment, RunOptions, SCHEMA_VERSION};
use cfpred::tailor::{FittedModel, TailorOptions};
use serde::{Deserialize, Serialize};

use crate::config::{Columns, InputFormat, MeasureName, MethodName, ModelConfig, RunConfig};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn emit(path: Option<&Path>, json: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

pub struct SimulateArgs {
    pub experiment: u8,
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub exp1: Exp1Options,
}

pub fn simulate(args: &SimulateArgs, par: Parallelism) -> Result<()> {
    let which = Experiment::from_id(args.experiment)?;
    let mut opts = RunOptions::new(args.reps, args.n, args.seed);
    opts.parallelism = par;
    opts.exp1 = args.exp1;
    let out = run_experiment(which, &opts)?;
    let stem = args.out.join(format!("experiment{}", which.id()));
    write_file(&stem.with_extension("csv"), &out.table.to_csv())?;
    write_file(&stem.with_extension("json"), &out.table.to_json()?)?;
    let t = &out.table;
    println!(
        "experiment {}: {} replicates ({} failed), n = {}, mean n_test = {}, seed = {}",
        t.experiment, t.reps, t.failed, t.n, t.n_test, t.seed
    );
    println!("{:<18} {:<9} {:<8} {:>10} {:>10} {:>10} {:>8}", "scenario", "estimator", "measure", "mean", "rootn_sd", "rootn_bias", "percent");
    for r in &t.rows {
        println!(
            "{:<18} {:<9} {:<8} {:>10.4} {:>10.4} {:>10.4} {:>8.2}",
            r.key.scenario, r.key.estimator, r.key.measure, r.mean, r.sqrt_n_sd, r.sqrt_n_bias, r.percent
        );
    }
    println!("wrote {} and {}", stem.with_extension("csv").display(), stem.with_extension("json").display());
    Ok(())
}

/// A model as written by `cfpred tailor`.
#[derive(Debug, Serialize, Deserialize)]
struct SavedModel {
    schema_version: String,
    name: String,
    covariates: Vec<String>,
    predictors: Vec<String>,
    model: FittedModel,
}

struct Obtained {
    name: String,
    predictors: Vec<String>,
    model: FittedModel,
}

fn predictor_names(cfg: &RunConfig, covariates: &[String]) -> Result<Vec<String>> {
    let names = cfg.predictors.clone().unwrap_or_else(|| covariates.to_vec());
    let cols = Columns::new(covariates);
    for n in &names {
        cols.index(n)?;
    }
    Ok(names)
}

fn tailor_options(cfg: &RunConfig) -> TailorOptions {
    TailorOptions { clip: cfg.nuisance.clip, ..TailorOptions::default() }
}

fn obtain_model(
    m: &ModelConfig,
    cfg: &RunConfig,
    covariates: &[String],
    train: &Dataset,
    target_a: Option<u8>,
) -> Result<Obtained> {
    if let Some(path) = &m.load {
        let saved: SavedModel = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if saved.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!("model schema version {} is not {SCHEMA_VERSION}", saved.schema_version)));
        }
        if saved.covariates != covariates {
            return Err(Error::Schema(format!(
                "model was fit on columns [{}] but the input has [{}]",
                saved.covariates.join(", "),
                covariates.join(", ")
            )));
        }
        return Ok(Obtained { name: saved.name, predictors: saved.predictors, model: saved.model });
    }
    let predictors = predictor_names(cfg, covariates)?;
    let recipe = m.recipe(&predictors, covariates, cfg.outcome)?;
    let a = match (target_a, m.method) {
        (Some(a), _) => a,
        (None, MethodName::Plain) => 0,
        (None, _) => {
            return Err(Error::Schema("tailored models need a static regime; use method \"plain\"".into()));
        }
    };
    if train.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let model = recipe.fit(train, a, &tailor_options(cfg))?;
    Ok(Obtained { name: recipe.name, predictors, model })
}

fn static_target(regime: &Regime) -> Option<u8> {
    match regime {
        Regime::Static(a) => Some(*a),
        _ => None,
    }
}

/// Loaded input with its split applied.
enum Input {
    Static(Dataset),
    Long(SequentialDataset),
}

fn load_input(cfg: &RunConfig) -> Result<(Input, Vec<String>)> {
    let file = File::open(&cfg.input).map_err(|e| Error::Schema(format!("cannot open {}: {e}", cfg.input.display())))?;
    let s = cfg.split;
    match cfg.format {
        InputFormat::Static => {
            let t = read_static_csv(file, cfg.outcome)?;
            let names = t.data.names().to_vec();
            let data = if t.has_split { t.data } else { split_dataset(t.data, s.fraction_train, s.seed)? };
            Ok((Input::Static(data), names))
        }
        InputFormat::Long => {
            let t = read_sequential_csv(file, cfg.outcome)?;
            let data = if t.has_split { t.data } else { t.data.split(s.fraction_train, s.seed)? };
            Ok((Input::Long(data), t.covariates))
        }
    }
}

fn named(data: Dataset, names: &[String]) -> Result<Dataset> {
    let outcome = data.outcome();
    Dataset::with_names(data.rows().to_vec(), outcome, names.to_vec())
}

#[derive(Serialize)]
struct BootstrapInfo {
    replicates: usize,
    dropped: usize,
    seed: u64,
    ci_method: cfpred::inference::CiMethod,
}

#[derive(Serialize)]
struct ResultRecord {
    #[serde(flatten)]
    estimate: PerfEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci_95: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<BootstrapInfo>,
}

#[derive(Serialize)]
struct EvaluateOutput {
    schema_version: &'static str,
    model: String,
    predictors: Vec<String>,
    n_train: usize,
    n_test: usize,
    estimates: Vec<ResultRecord>,
}

type EstimateFn<'a, D> = Box<dyn Fn(&D) -> Result<PerfEstimate> + Sync + Send + 'a>;

fn with_bootstrap<D: Resample>(test: &D, f: EstimateFn<'_, D>, cfg: &RunConfig, par: Parallelism) -> Result<ResultRecord> {
    let mut estimate = f(test)?;
    if cfg.bootstrap.b == 0 || estimate.value.is_none() {
        return Ok(ResultRecord { estimate, ci_95: None, bootstrap: None });
    }
    let b = cfg.bootstrap;
    let r: BootstrapResult = bootstrap(test, |d| f(d).map(|e| e.value_or_nan()), b.b, b.seed, b.ci, par)?;
    estimate.se = Some(r.se);
    Ok(ResultRecord {
        estimate,
        ci_95: Some(r.ci_95),
        bootstrap: Some(BootstrapInfo { replicates: r.replicates, dropped: r.dropped, seed: r.seed, ci_method: r.ci_method }),
    })
}

fn skip(kind: EstimatorKind, what: &str) {
    log::warn!("estimator '{}' is not available for {what}; skipped", kind.label());
}

fn static_tasks<'a>(
    cfg: &'a RunConfig,
    regime: &'a Regime,
    specs: &'a NuisanceSpecs,
    model: &'a FittedModel,
) -> Vec<EstimateFn<'a, Dataset>> {
    let loss = cfg.loss;
    let mut tasks: Vec<EstimateFn<'a, Dataset>> = Vec::new();
    for measure in &cfg.measures {
        for &kind in &cfg.estimators {
            match (regime, measure) {
                (Regime::Static(a), MeasureName::Loss) => {
                    let a = *a;
                    if kind == EstimatorKind::Naive {
                        tasks.push(Box::new(move |d| loss_naive(d, model, loss)));
                    } else {
                        tasks.push(Box::new(move |d| {
                            let nuis = NuisanceSet::fit(d, model, specs, a, loss)?;
                            loss_estimate(d, model, &nuis, kind)
                        }));
                    }
                }
                (Regime::Static(a), MeasureName::Auc) => {
                    let a = *a;
                    let auc = match kind {
                        EstimatorKind::Naive => AucKind::Naive,
                        EstimatorKind::CL | EstimatorKind::OM => AucKind::OM,
                        EstimatorKind::IPW => AucKind::IPW,
                        EstimatorKind::DR => {
                            skip(kind, "the AUC");
                            continue;
                        }
                    };
                    tasks.push(Box::new(move |d| {
                        let nuis = arm_nuisance(d, model, specs, a, loss, auc == AucKind::IPW, auc == AucKind::OM)?;
                        auc_estimate(d, model, auc, Some(&nuis))
                    }));
                }
                (Regime::Static(a), MeasureName::Calibration) => {
                    let a = *a;
                    let cal = match kind {
                        EstimatorKind::Naive => CalibrationKind::Naive,
                        EstimatorKind::CL | EstimatorKind::OM => CalibrationKind::OM,
                        EstimatorKind::IPW => CalibrationKind::IPW,
                        EstimatorKind::DR => {
                            skip(kind, "calibration");
                            continue;
                        }
                    };
                    let method = cfg.calibration;
                    tasks.push(Box::new(move |d| {
                        let nuis =
                            arm_nuisance(d, model, specs, a, loss, cal == CalibrationKind::IPW, cal == CalibrationKind::OM)?;
                        calibration_curve(d, model, Some(&nuis), method, cal)
                    }));
                }
                (Regime::Stochastic(policy), MeasureName::Loss) => {
                    let sk = match kind {
                        EstimatorKind::Naive => {
                            tasks.push(Box::new(move |d| loss_naive(d, model, loss)));
                            continue;
                        }
                        EstimatorKind::CL | EstimatorKind::OM => StochasticKind::CL,
                        EstimatorKind::IPW => StochasticKind::IPW,
                        EstimatorKind::DR => {
                            skip(kind, "stochastic regimes");
                            continue;
                        }
                    };
                    tasks.push(Box::new(move |d| {
                        let n0 = NuisanceSet::fit(d, model, specs, 0, loss)?;
                        let n1 = NuisanceSet::fit(d, model, specs, 1, loss)?;
                        loss_stochastic(d, policy, &n0, &n1, model, sk)
                    }));
                }
                (_, m) => {
                    skip(kind, &format!("{m:?} under this regime").to_lowercase());
                }
            }
        }
    }
    tasks
}

/// Only the nuisance components an AUC or calibration estimator needs.
fn arm_nuisance(
    d: &Dataset,
    model: &FittedModel,
    specs: &NuisanceSpecs,
    a: u8,
    loss: Loss,
    propensity: bool,
    outcome: bool,
) -> Result<NuisanceSet> {
    let mut nuis = NuisanceSet::new(a, loss);
    if propensity {
        nuis = nuis.with_propensity(fit_propensity(d, &specs.propensity, a, specs.clip)?);
    }
    if outcome {
        let h = fit_cond_loss_with(d, model, &specs.cond_loss, a, loss, cfpred::nuisance::CondLossStrategy::Auto)?;
        nuis = nuis.with_cond_loss(h);
    }
    Ok(nuis)
}

fn sequential_tasks<'a>(cfg: &'a RunConfig, regime: &'a Regime, model: &'a FittedModel) -> Result<Vec<EstimateFn<'a, SequentialDataset>>> {
    let Regime::Sequential(g) = regime else {
        return Err(Error::Schema("long-format input needs a sequential regime".into()));
    };
    let loss = cfg.loss;
    let n = &cfg.nuisance;
    let mut tasks: Vec<EstimateFn<'a, SequentialDataset>> = Vec::new();
    for measure in &cfg.measures {
        if *measure != MeasureName::Loss {
            log::warn!("only loss measures are available for sequential regimes; {measure:?} skipped");
            continue;
        }
        for &kind in &cfg.estimators {
            let specs = move |d: &SequentialDataset| {
                let mut h = HistorySpecs::main_effects(d.horizon(), d.dim());
                if n.history_treatments {
                    h.include_treatments = true;
                    for (k, s) in h.per_time.iter_mut().enumerate() {
                        *s = cfpred::glm::DesignSpec::linear(0..d.dim() * (k + 1) + k);
                    }
                }
                h
            };
            match kind {
                EstimatorKind::Naive => tasks.push(Box::new(move |d| loss_naive_sequential(d, model, loss))),
                EstimatorKind::IPW => tasks.push(Box::new(move |d| {
                    let w = sequential_weights(d, g, &specs(d), None, n.clip)?;
                    loss_ipw_sequential(d, g, &w, model, loss)
                })),
                EstimatorKind::CL | EstimatorKind::OM => {
                    tasks.push(Box::new(move |d| loss_ice_sequential(d, g, &specs(d), model, loss, n.strategy)))
                }
                EstimatorKind::DR => skip(kind, "sequential regimes"),
            }
        }
    }
    Ok(tasks)
}

fn calibration_path(base: &Path, kind: EstimatorKind) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "calibration".into());
    let ext = base.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    base.with_file_name(format!("{stem}_{}.{ext}", kind.label()))
}

pub fn evaluate(cfg: &RunConfig, out: Option<&Path>, par: Parallelism) -> Result<()> {
    let (input, covariates) = load_input(cfg)?;
    let cols = Columns::new(&covariates);
    let regime = cfg.regime.resolve(&cols)?;
    let specs = cfg.nuisance.resolve(&cols)?;
    let m = cfg.model.as_ref().ok_or_else(|| Error::Schema("config has no \"model\" section".into()))?;
    let (records, got, n_train, n_test) = match input {
        Input::Static(data) => {
            let train = data.train();
            let test = data.test();
            if test.is_empty() {
                return Err(Error::InvalidArgument("test split is empty".into()));
            }
            let got = obtain_model(m, cfg, &covariates, &train, static_target(&regime))?;
            let tasks = static_tasks(cfg, &regime, &specs, &got.model);
            let records = tasks.into_iter().map(|f| with_bootstrap(&test, f, cfg, par)).collect::<Result<Vec<_>>>()?;
            (records, got, train.len(), test.len())
        }
        Input::Long(data) => {
            let train = named(data.train().baseline_view()?, &covariates)?;
            let test = data.test();
            if test.is_empty() {
                return Err(Error::InvalidArgument("test split is empty".into()));
            }
            let got = obtain_model(m, cfg, &covariates, &train, None)?;
            let tasks = sequential_tasks(cfg, &regime, &got.model)?;
            let records = tasks.into_iter().map(|f| with_bootstrap(&test, f, cfg, par)).collect::<Result<Vec<_>>>()?;
            (records, got, train.len(), test.len())
        }
    };
    if let Some(base) = &cfg.output.calibration_csv {
        for r in &records {
            if let Some(curve) = &r.estimate.curve {
                write_file(&calibration_path(base, r.estimate.kind), &calibration_csv(curve))?;
            }
        }
    }
    let doc = EvaluateOutput {
        schema_version: SCHEMA_VERSION,
        model: got.name,
        predictors: got.predictors,
        n_train,
        n_test,
        estimates: records,
    };
    let json = serde_json::to_string_pretty(&doc)? + "\n";
    emit(out.or(cfg.output.results.as_deref()), &json)
}

pub fn tailor(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let (input, covariates) = load_input(cfg)?;
    let regime = cfg.regime.resolve(&Columns::new(&covariates))?;
    let m = cfg.model.as_ref().ok_or_else(|| Error::Schema("config has no \"model\" section".into()))?;
    if m.load.is_some() {
        return Err(Error::Schema("tailor fits a model; remove \"load\" from the model section".into()));
    }
    let train = match input {
        Input::Static(d) => d.train(),
        Input::Long(d) => named(d.train().baseline_view()?, &covariates)?,
    };
    let got = obtain_model(m, cfg, &covariates, &train, static_target(&regime))?;
    let saved = SavedModel {
        schema_version: SCHEMA_VERSION.into(),
        name: got.name,
        covariates,
        predictors: got.predictors,
        model: got.model,
    };
    emit(out, &(serde_json::to_string_pretty(&saved)? + "\n"))
}

#[derive(Serialize)]
struct CvOutput {
    schema_version: &'static str,
    estimator: EstimatorKind,
    folds: usize,
    seed: u64,
    n_train: usize,
    names: Vec<String>,
    mean_loss: Vec<f64>,
    fold_loss: Vec<Vec<f64>>,
    selected: String,
}

pub fn cv(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let (input, covariates) = load_input(cfg)?;
    let Input::Static(data) = input else {
        return Err(Error::Schema("cross-validation needs time-fixed input".into()));
    };
    let cols = Columns::new(&covariates);
    let Regime::Static(a) = cfg.regime.resolve(&cols)? else {
        return Err(Error::Schema("cross-validation needs a static regime".into()));
    };
    if cfg.candidates.is_empty() {
        return Err(Error::Schema("config has no \"candidates\"".into()));
    }
    let predictors = predictor_names(cfg, &covariates)?;
    let recipes = cfg
        .candidates
        .iter()
        .map(|c| {
            if c.load.is_some() {
                return Err(Error::Schema("cross-validation candidates must be recipes, not saved models".into()));
            }
            c.recipe(&predictors, &covariates, cfg.outcome)
        })
        .collect::<Result<Vec<_>>>()?;
    let specs = cfg.nuisance.resolve(&cols)?;
    let train = data.train();
    let r = cv_select(&train, &recipes, cfg.cv.estimator, &specs, a, cfg.loss, cfg.cv.folds, cfg.cv.seed)?;
    let doc = CvOutput {
        schema_version: SCHEMA_VERSION,
        estimator: cfg.cv.estimator,
        folds: cfg.cv.folds,
        seed: cfg.cv.seed,
        n_train: train.len(),
        selected: r.names[r.selected].clone(),
        names: r.names,
        mean_loss: r.mean_loss,
        fold_loss: r.fold_loss,
    };
    emit(out, &(serde_json::to_string_pretty(&doc)? + "\n"))
}

/// Exit status for a failed run: 2 for problems with the request or its
/// inputs, 1 for failures of the analysis itself.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Schema(_)
        | Error::InvalidArgument(_)
        | Error::Data(_)
        | Error::InvalidRegime(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}
