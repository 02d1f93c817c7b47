//! JSON run configuration.
//!
//! Columns are referenced by name everywhere; names are resolved against
//! the input header before anything is fit, so a typo fails fast with a
//! schema error. Relative paths are taken relative to the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cfpred::data::{Loss, OutcomeKind};
use cfpred::error::{Error, Result};
use cfpred::glm::{DesignSpec, Family, Term, Transform};
use cfpred::inference::CiMethod;
use cfpred::nuisance::{CondLossStrategy, NuisanceSpecs};
use cfpred::perf::{CalibrationMethod, EstimatorKind, RecipeMethod};
use cfpred::regime::{Regime, SequentialRegime, SequentialRule, StochasticPolicy};
use serde::Deserialize;

/// Every default in one place.
pub mod defaults {
    /// Bounds applied to fitted treatment probabilities.
    pub const CLIP: (f64, f64) = (0.01, 0.99);
    /// Degrees of freedom of the `splines` shorthand.
    pub const SPLINE_DF: usize = 4;
    /// Calibration bins.
    pub const BINS: usize = 10;
    /// Bootstrap replicates; 0 disables standard errors.
    pub const BOOTSTRAP_B: usize = 1000;
    pub const SEED: u64 = 1;
    /// Training fraction when the input has no `D` column.
    pub const TRAIN_FRACTION: f64 = 0.5;
    pub const CV_FOLDS: usize = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    #[default]
    Static,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureName {
    Loss,
    Auc,
    Calibration,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub format: InputFormat,
    pub outcome: OutcomeKind,
    /// Covariates the prediction model may use; all of them by default.
    #[serde(default)]
    pub predictors: Option<Vec<String>>,
    pub regime: RegimeConfig,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub candidates: Vec<ModelConfig>,
    #[serde(default)]
    pub nuisance: NuisanceConfig,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_measures")]
    pub measures: Vec<MeasureName>,
    #[serde(default)]
    pub loss: Loss,
    #[serde(default = "default_calibration")]
    pub calibration: CalibrationMethod,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Naive, EstimatorKind::CL, EstimatorKind::IPW, EstimatorKind::DR]
}

fn default_measures() -> Vec<MeasureName> {
    vec![MeasureName::Loss]
}

fn default_calibration() -> CalibrationMethod {
    CalibrationMethod::Binned { bins: defaults::BINS }
}

/// Exactly one strategy, e.g. `{"static": 0}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RegimeConfig {
    Static(u8),
    Stochastic(PolicyConfig),
    Sequential(Vec<RuleConfig>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    Constant(f64),
    Logistic {
        intercept: f64,
        #[serde(default)]
        coefs: BTreeMap<String, f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleConfig {
    Constant(u8),
    Threshold { covariate: String, cutoff: f64, above: u8, below: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    Plain,
    Standardized,
    Ipw,
}

/// A model to fit on the training split, or a previously saved one.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Path of a model written by `cfpred tailor`; other fields are ignored.
    #[serde(default)]
    pub load: Option<PathBuf>,
    #[serde(default)]
    pub method: MethodName,
    #[serde(default)]
    pub family: Option<Family>,
    /// Formula over the predictor columns.
    #[serde(default)]
    pub spec: Option<SpecConfig>,
    /// First-stage outcome model for standardization, over all covariates.
    #[serde(default)]
    pub outcome_spec: Option<SpecConfig>,
    /// Treatment model for weighting, over all covariates.
    #[serde(default)]
    pub propensity_spec: Option<SpecConfig>,
}

/// A shorthand (`intercept`, `linear`, `quadratic`, `splines`) or an
/// explicit term list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SpecConfig {
    Shorthand(String),
    Terms {
        terms: Vec<TermConfig>,
        #[serde(default = "yes")]
        include_intercept: bool,
    },
}

fn yes() -> bool {
    true
}

/// A column name (main effect) or a transformed term.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TermConfig {
    Name(String),
    Full(NamedTerm),
}

#[derive(Debug, Clone, Deserialize)]
pub struct NamedTerm {
    pub col: String,
    #[serde(flatten)]
    pub transform: NamedTransform,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "transform", rename_all = "snake_case")]
pub enum NamedTransform {
    Linear,
    Power { k: u32 },
    Spline { df: Option<usize> },
    Interaction { with: Vec<String> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuisanceConfig {
    #[serde(default = "linear")]
    pub propensity: SpecConfig,
    #[serde(default = "linear")]
    pub cond_loss: SpecConfig,
    #[serde(default = "default_clip")]
    pub clip: (f64, f64),
    #[serde(default)]
    pub strategy: CondLossStrategy,
    /// Sequential data only: add past treatments to the history features.
    #[serde(default)]
    pub history_treatments: bool,
}

fn linear() -> SpecConfig {
    SpecConfig::Shorthand("linear".into())
}

fn default_clip() -> (f64, f64) {
    defaults::CLIP
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            propensity: linear(),
            cond_loss: linear(),
            clip: defaults::CLIP,
            strategy: CondLossStrategy::default(),
            history_treatments: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "default_b")]
    pub b: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub ci: CiMethod,
}

fn default_b() -> usize {
    defaults::BOOTSTRAP_B
}

fn default_seed() -> u64 {
    defaults::SEED
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { b: defaults::BOOTSTRAP_B, seed: defaults::SEED, ci: CiMethod::default() }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_fraction")]
    pub fraction_train: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_fraction() -> f64 {
    defaults::TRAIN_FRACTION
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { fraction_train: defaults::TRAIN_FRACTION, seed: defaults::SEED }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_cv_estimator")]
    pub estimator: EstimatorKind,
}

fn default_folds() -> usize {
    defaults::CV_FOLDS
}

fn default_cv_estimator() -> EstimatorKind {
    EstimatorKind::DR
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: defaults::CV_FOLDS, seed: defaults::SEED, estimator: EstimatorKind::DR }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Results JSON; standard output when absent.
    #[serde(default)]
    pub results: Option<PathBuf>,
    /// Calibration curves, one file per estimator with the estimator name
    /// appended to the file stem.
    #[serde(default)]
    pub calibration_csv: Option<PathBuf>,
}

impl RunConfig {
    /// Parses a config file and makes its relative paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.input);
        for m in cfg.model.iter_mut().chain(cfg.candidates.iter_mut()) {
            if let Some(p) = m.load.as_mut() {
                fix(p);
            }
        }
        if let Some(p) = cfg.output.results.as_mut() {
            fix(p);
        }
        if let Some(p) = cfg.output.calibration_csv.as_mut() {
            fix(p);
        }
        Ok(cfg)
    }
}

/// Name resolution against one list of columns.
pub struct Columns<'a> {
    names: &'a [String],
}

impl<'a> Columns<'a> {
    pub fn new(names: &'a [String]) -> Self {
        Self { names }
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        cfpred::csv_io::column_index(self.names, name)
    }

    pub fn spec(&self, spec: &SpecConfig) -> Result<DesignSpec> {
        let all = 0..self.names.len();
        let out = match spec {
            SpecConfig::Shorthand(s) => match s.as_str() {
                "intercept" => DesignSpec::intercept_only(),
                "linear" => DesignSpec::linear(all),
                "quadratic" => DesignSpec::quadratic(all),
                "splines" => DesignSpec::additive_splines(all, defaults::SPLINE_DF),
                other => {
                    return Err(Error::Schema(format!(
                        "unknown model shorthand '{other}'; expected intercept, linear, quadratic or splines"
                    )))
                }
            },
            SpecConfig::Terms { terms, include_intercept } => {
                let terms = terms.iter().map(|t| self.term(t)).collect::<Result<Vec<_>>>()?;
                DesignSpec::new(terms, *include_intercept)?
            }
        };
        Ok(out)
    }

    fn term(&self, t: &TermConfig) -> Result<Term> {
        match t {
            TermConfig::Name(n) => Ok(Term::linear(self.index(n)?)),
            TermConfig::Full(NamedTerm { col, transform }) => {
                let col = self.index(col)?;
                let transform = match transform {
                    NamedTransform::Linear => Transform::Linear,
                    NamedTransform::Power { k } => Transform::Power { k: *k },
                    NamedTransform::Spline { df } => Transform::Spline { df: df.unwrap_or(defaults::SPLINE_DF) },
                    NamedTransform::Interaction { with } => {
                        Transform::Interaction { with: with.iter().map(|n| self.index(n)).collect::<Result<_>>()? }
                    }
                };
                Ok(Term { col, transform })
            }
        }
    }
}

impl NuisanceConfig {
    pub fn resolve(&self, cols: &Columns) -> Result<NuisanceSpecs> {
        Ok(NuisanceSpecs {
            propensity: cols.spec(&self.propensity)?,
            cond_loss: cols.spec(&self.cond_loss)?,
            clip: self.clip,
            strategy: self.strategy,
        })
    }
}

impl ModelConfig {
    /// Core recipe: predictor indices into X, the model formula over the
    /// predictor subset and nuisance formulas over X.
    pub fn recipe(&self, predictors: &[String], covariates: &[String], outcome: OutcomeKind) -> Result<cfpred::perf::ModelRecipe> {
        let all = Columns::new(covariates);
        let idx = predictors.iter().map(|p| all.index(p)).collect::<Result<Vec<_>>>()?;
        let spec = Columns::new(predictors).spec(self.spec.as_ref().unwrap_or(&linear()))?;
        let family = self.family.unwrap_or(match outcome {
            OutcomeKind::Binary => Family::BinomialLogit,
            OutcomeKind::Continuous => Family::Gaussian,
        });
        let method = match self.method {
            MethodName::Plain => RecipeMethod::Plain,
            MethodName::Standardized => {
                RecipeMethod::Standardized { outcome_spec: all.spec(self.outcome_spec.as_ref().unwrap_or(&linear()))? }
            }
            MethodName::Ipw => {
                RecipeMethod::Ipw { propensity_spec: all.spec(self.propensity_spec.as_ref().unwrap_or(&linear()))? }
            }
        };
        Ok(cfpred::perf::ModelRecipe {
            name: self.name.clone().unwrap_or_else(|| format!("{:?}", self.method).to_lowercase()),
            predictors: idx,
            spec,
            family,
            method,
        })
    }
}

impl RegimeConfig {
    pub fn resolve(&self, cols: &Columns) -> Result<Regime> {
        match self {
            RegimeConfig::Static(a) => Regime::static_arm(*a),
            RegimeConfig::Stochastic(PolicyConfig::Constant(p)) => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidRegime(format!("treatment probability {p} outside [0, 1]")));
                }
                Ok(Regime::Stochastic(StochasticPolicy::Constant(*p)))
            }
            RegimeConfig::Stochastic(PolicyConfig::Logistic { intercept, coefs }) => {
                let coefs = coefs.iter().map(|(n, b)| Ok((cols.index(n)?, *b))).collect::<Result<_>>()?;
                Ok(Regime::Stochastic(StochasticPolicy::Logistic { intercept: *intercept, coefs }))
            }
            RegimeConfig::Sequential(rules) => {
                let rules = rules
                    .iter()
                    .map(|r| match r {
                        RuleConfig::Constant(a) => Ok(SequentialRule::Constant(*a)),
                        RuleConfig::Threshold { covariate, cutoff, above, below } => Ok(SequentialRule::Threshold {
                            covariate: cols.index(covariate)?,
                            cutoff: *cutoff,
                            above: *above,
                            below: *below,
                        }),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Regime::Sequential(SequentialRegime::new(rules)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["age", "bmi", "sbp"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn shorthand_and_terms() {
        let n = names();
        let cols = Columns::new(&n);
        let lin = cols.spec(&SpecConfig::Shorthand("linear".into())).unwrap();
        assert_eq!(lin, DesignSpec::linear(0..3));
        let json = r#"{"terms": ["bmi", {"col": "age", "transform": "power", "k": 2},
                       {"col": "age", "transform": "interaction", "with": ["sbp"]}]}"#;
        let spec = cols.spec(&serde_json::from_str(json).unwrap()).unwrap();
        assert_eq!(spec.terms, vec![Term::linear(1), Term::power(0, 2), Term::interaction(0, vec![2])]);
        assert!(spec.include_intercept);
    }

    #[test]
    fn unknown_names_are_schema_errors() {
        let n = names();
        let cols = Columns::new(&n);
        let bad: SpecConfig = serde_json::from_str(r#"{"terms": ["weight"]}"#).unwrap();
        assert!(matches!(cols.spec(&bad), Err(Error::Schema(_))));
        assert!(matches!(cols.spec(&SpecConfig::Shorthand("cubic".into())), Err(Error::Schema(_))));
    }

    #[test]
    fn regimes_parse() {
        let n = names();
        let cols = Columns::new(&n);
        let r: RegimeConfig = serde_json::from_str(r#"{"static": 1}"#).unwrap();
        assert!(matches!(r.resolve(&cols).unwrap(), Regime::Static(1)));
        let r: RegimeConfig =
            serde_json::from_str(r#"{"stochastic": {"logistic": {"intercept": 0, "coefs": {"sbp": 0.1}}}}"#).unwrap();
        assert!(matches!(r.resolve(&cols).unwrap(), Regime::Stochastic(_)));
        let r: RegimeConfig = serde_json::from_str(
            r#"{"sequential": [{"constant": 0}, {"threshold": {"covariate": "bmi", "cutoff": 30, "above": 1, "below": 0}}]}"#,
        )
        .unwrap();
        assert!(matches!(r.resolve(&cols).unwrap(), Regime::Sequential(_)));
        assert!(serde_json::from_str::<RegimeConfig>(r#"{"static": 0, "stochastic": {"constant": 0.5}}"#).is_err());
    }
}
