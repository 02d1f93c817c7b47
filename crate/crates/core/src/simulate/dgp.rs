use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Loss, Observation, OutcomeKind};
use crate::error::{Error, Result};
use crate::glm::expit;
use crate::perf::pairwise_auc;
use crate::rng::{stream_rng, streams};
use crate::tailor::Predictor;

/// Sign convention of the Experiment-1 treatment model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exp1Treatment {
    /// Pr[A = 1 | X] = expit(−1.5 + 0.3X).
    #[default]
    Increasing,
    /// Pr[A = 1 | X] = expit(1.5 − 0.3X).
    Decreasing,
}

/// How the Experiment-1 noise scale depends on X.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exp1Noise {
    /// Var(ε | X) = X.
    #[default]
    VarianceX,
    /// SD(ε | X) = X.
    SdX,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Exp1Options {
    #[serde(default)]
    pub treatment: Exp1Treatment,
    #[serde(default)]
    pub noise: Exp1Noise,
}

/// Simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    /// X ~ U(0, 10); A ~ Bern(expit(−1.5 + 0.3X));
    /// Y = 1 + X + 0.5X² − 3A + ε.
    Exp1(Exp1Options),
    /// X ~ N((0.2, 0, 0.5), 0.2 I₃);
    /// A ~ Bern(expit(0.5 − 2X₁ + 3X₁² + 2X₂ − X₃));
    /// Y ~ Bern(expit(0.2 + 3X₁ − 2X₁² + 2X₂ + X₃ − 2A)).
    Exp2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dgp {
    pub kind: DgpKind,
    pub n: usize,
    pub seed: u64,
}

/// A draw together with both potential outcomes per row, built from the
/// same per-row noise (common random numbers).
#[derive(Debug, Clone)]
pub struct PotentialDraw {
    pub data: Dataset,
    /// (Y⁰, Y¹) for each row.
    pub potential: Vec<[f64; 2]>,
}

impl PotentialDraw {
    pub fn outcomes(&self, a: u8) -> Vec<f64> {
        self.potential.iter().map(|p| p[usize::from(a)]).collect()
    }
}

const EXP2_MEAN: [f64; 3] = [0.2, 0.0, 0.5];
const EXP2_VAR: f64 = 0.2;

impl DgpKind {
    pub fn dim(self) -> usize {
        match self {
            DgpKind::Exp1(_) => 1,
            DgpKind::Exp2 => 3,
        }
    }

    pub fn outcome(self) -> OutcomeKind {
        match self {
            DgpKind::Exp1(_) => OutcomeKind::Continuous,
            DgpKind::Exp2 => OutcomeKind::Binary,
        }
    }

    /// Pr[A = 1 | x].
    pub fn treatment_prob(self, x: &[f64]) -> f64 {
        match self {
            DgpKind::Exp1(o) => match o.treatment {
                Exp1Treatment::Increasing => expit(-1.5 + 0.3 * x[0]),
                Exp1Treatment::Decreasing => expit(1.5 - 0.3 * x[0]),
            },
            DgpKind::Exp2 => expit(0.5 - 2.0 * x[0] + 3.0 * x[0] * x[0] + 2.0 * x[1] - x[2]),
        }
    }

    /// E[Y^a | x].
    pub fn outcome_mean(self, x: &[f64], a: u8) -> f64 {
        let a = f64::from(a);
        match self {
            DgpKind::Exp1(_) => 1.0 + x[0] + 0.5 * x[0] * x[0] - 3.0 * a,
            DgpKind::Exp2 => expit(0.2 + 3.0 * x[0] - 2.0 * x[0] * x[0] + 2.0 * x[1] + x[2] - 2.0 * a),
        }
    }

    /// Var(Y^a | x).
    pub fn outcome_variance(self, x: &[f64], a: u8) -> f64 {
        match self {
            DgpKind::Exp1(o) => match o.noise {
                Exp1Noise::VarianceX => x[0],
                Exp1Noise::SdX => x[0] * x[0],
            },
            DgpKind::Exp2 => {
                let p = self.outcome_mean(x, a);
                p * (1.0 - p)
            }
        }
    }

    /// One row: covariates, treatment and both potential outcomes. Draw
    /// order per row is fixed: covariates, treatment uniform, outcome noise.
    fn draw_row<R: Rng>(self, rng: &mut R, force: Option<u8>) -> (Vec<f64>, u8, [f64; 2]) {
        let x: Vec<f64> = match self {
            DgpKind::Exp1(_) => vec![rng.random_range(0.0..10.0)],
            DgpKind::Exp2 => EXP2_MEAN
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + EXP2_VAR.sqrt() * z
                })
                .collect(),
        };
        let u_a: f64 = rng.random();
        let a = force.unwrap_or(u8::from(u_a < self.treatment_prob(&x)));
        let potential = match self {
            DgpKind::Exp1(o) => {
                let z: f64 = StandardNormal.sample(rng);
                let eps = match o.noise {
                    Exp1Noise::VarianceX => x[0].sqrt() * z,
                    Exp1Noise::SdX => x[0] * z,
                };
                [self.outcome_mean(&x, 0) + eps, self.outcome_mean(&x, 1) + eps]
            }
            DgpKind::Exp2 => {
                let u_y: f64 = rng.random();
                [0, 1].map(|arm| f64::from(u8::from(u_y < self.outcome_mean(&x, arm))))
            }
        };
        (x, a, potential)
    }
}

impl Dgp {
    pub fn new(kind: DgpKind, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be positive".into()));
        }
        Ok(Self { kind, n, seed })
    }

    fn draw(&self, stream: u64, force: Option<u8>) -> PotentialDraw {
        let mut rng = stream_rng(self.seed, stream);
        let mut rows = Vec::with_capacity(self.n);
        let mut potential = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let (x, a, po) = self.kind.draw_row(&mut rng, force);
            rows.push(Observation::new(x, a, po[usize::from(a)]));
            potential.push(po);
        }
        let data = Dataset::new(rows, self.kind.outcome()).expect("simulated rows are valid");
        PotentialDraw { data, potential }
    }

    /// Observed data (X, A, Y = Y^A).
    pub fn generate(&self) -> Dataset {
        self.draw(streams::DATASET, None).data
    }

    /// Observed data plus both potential outcomes per row.
    pub fn generate_potential(&self) -> PotentialDraw {
        self.draw(streams::DATASET, None)
    }

    /// Independent draw with A forced to `a` for every row, as used for
    /// the counterfactual truth.
    pub fn generate_forced(&self, a: u8) -> Dataset {
        self.draw(streams::TRUTH, Some(a)).data
    }
}

/// Measure evaluated by [`truth_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMeasure {
    Loss(Loss),
    Auc,
}

/// Performance of a fixed model on a fresh draw of `n` rows with A forced to
/// `target_a`, i.e. against the outcomes Y^a.
pub fn truth_oracle(dgp: &Dgp, model: &dyn Predictor, measure: TruthMeasure, target_a: u8) -> Result<f64> {
    let forced = dgp.generate_forced(target_a);
    let pred = model.predict_all(&forced)?;
    let y = forced.outcomes();
    match measure {
        TruthMeasure::Loss(loss) => Ok(y.iter().zip(&pred).map(|(y, p)| loss.eval(*y, *p)).sum::<f64>() / y.len() as f64),
        TruthMeasure::Auc => {
            forced.require_binary("AUC")?;
            let v: Vec<f64> = y.iter().map(|y| 1.0 - y).collect();
            pairwise_auc(&pred, &y, &v)
        }
    }
}
