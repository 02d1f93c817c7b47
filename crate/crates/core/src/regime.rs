//! Counterfactual treatment strategies.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type PolicyFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type RuleFn = Arc<dyn Fn(&[u8], &[Vec<f64>]) -> u8 + Send + Sync>;

/// Probability law Pr*[A = 1 | X] of a stochastic intervention.
#[derive(Clone)]
pub enum StochasticPolicy {
    Constant(f64),
    /// expit(intercept + sum coef_j * x_j)
    Logistic { intercept: f64, coefs: Vec<(usize, f64)> },
    Custom(PolicyFn),
}

impl StochasticPolicy {
    /// Pr*[A = 1 | x], validated to lie in [0, 1].
    pub fn prob_treat(&self, x: &[f64]) -> Result<f64> {
        let p = match self {
            StochasticPolicy::Constant(p) => *p,
            StochasticPolicy::Logistic { intercept, coefs } => {
                let mut eta = *intercept;
                for &(j, b) in coefs {
                    let v = x
                        .get(j)
                        .ok_or_else(|| Error::InvalidRegime(format!("policy references column {j}")))?;
                    eta += b * v;
                }
                crate::glm::expit(eta)
            }
            StochasticPolicy::Custom(f) => f(x),
        };
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidRegime(format!("Pr*[A=1|X] = {p} outside [0, 1]")));
        }
        Ok(p)
    }
}

impl fmt::Debug for StochasticPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StochasticPolicy::Constant(p) => write!(f, "constant({p})"),
            StochasticPolicy::Logistic { intercept, coefs } => write!(f, "logistic({intercept}, {coefs:?})"),
            StochasticPolicy::Custom(_) => write!(f, "custom"),
        }
    }
}

/// Rule g_k deciding treatment at time k from the observed histories.
#[derive(Clone)]
pub enum SequentialRule {
    Constant(u8),
    /// Treat according to whether covariate `covariate` of the current X_k
    /// exceeds `cutoff`.
    Threshold { covariate: usize, cutoff: f64, above: u8, below: u8 },
    Custom(RuleFn),
}

impl SequentialRule {
    /// a^g_k given A_0..A_{k-1} and X_0..X_k.
    pub fn decide(&self, a_prev: &[u8], x_hist: &[Vec<f64>]) -> u8 {
        match self {
            SequentialRule::Constant(a) => *a,
            SequentialRule::Threshold { covariate, cutoff, above, below } => {
                let current = x_hist.last().and_then(|x| x.get(*covariate)).copied().unwrap_or(f64::NAN);
                if current > *cutoff {
                    *above
                } else {
                    *below
                }
            }
            SequentialRule::Custom(f) => f(a_prev, x_hist),
        }
    }
}

impl fmt::Debug for SequentialRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequentialRule::Constant(a) => write!(f, "{a}"),
            SequentialRule::Threshold { covariate, cutoff, above, below } => {
                write!(f, "x[{covariate}]>{cutoff}?{above}:{below}")
            }
            SequentialRule::Custom(_) => write!(f, "custom"),
        }
    }
}

/// Regime g = {g_0, ..., g_K} over a horizon K.
#[derive(Debug, Clone)]
pub struct SequentialRegime {
    rules: Vec<SequentialRule>,
}

impl SequentialRegime {
    pub fn new(rules: Vec<SequentialRule>) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::InvalidRegime("sequential regime needs at least one rule".into()));
        }
        for r in &rules {
            let values = match r {
                SequentialRule::Constant(a) => vec![*a],
                SequentialRule::Threshold { above, below, .. } => vec![*above, *below],
                SequentialRule::Custom(_) => vec![],
            };
            if let Some(a) = values.into_iter().find(|a| *a > 1) {
                return Err(Error::InvalidRegime(format!("treatment value {a} is not binary")));
            }
        }
        Ok(Self { rules })
    }

    /// Static regime setting A_k = a at every time point.
    pub fn always(a: u8, horizon: usize) -> Result<Self> {
        Self::new(vec![SequentialRule::Constant(a); horizon + 1])
    }

    pub fn static_path(path: &[u8]) -> Result<Self> {
        Self::new(path.iter().map(|&a| SequentialRule::Constant(a)).collect())
    }

    /// Horizon K (rules are g_0..g_K).
    pub fn horizon(&self) -> usize {
        self.rules.len() - 1
    }

    pub fn rules(&self) -> &[SequentialRule] {
        &self.rules
    }

    pub fn decide(&self, k: usize, a_prev: &[u8], x_hist: &[Vec<f64>]) -> u8 {
        self.rules[k].decide(a_prev, x_hist)
    }
}

/// The counterfactual treatment strategy under evaluation.
#[derive(Debug, Clone)]
pub enum Regime {
    Static(u8),
    Stochastic(StochasticPolicy),
    Sequential(SequentialRegime),
}

impl Regime {
    pub fn static_arm(a: u8) -> Result<Self> {
        if a > 1 {
            return Err(Error::InvalidRegime(format!("static treatment {a} is not binary")));
        }
        Ok(Regime::Static(a))
    }

    /// Short label used in result records.
    pub fn describe(&self) -> String {
        match self {
            Regime::Static(a) => format!("static(a={a})"),
            Regime::Stochastic(p) => format!("stochastic({p:?})"),
            Regime::Sequential(g) => format!("sequential({:?})", g.rules()),
        }
    }
}

/// Serializable static target of a tailored model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    NaturalCourse,
    Counterfactual { a: u8 },
}
