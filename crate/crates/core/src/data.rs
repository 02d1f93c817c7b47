//! Observations, datasets, predictor subsets and losses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};

/// Train/test membership of a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// Dataset-level declaration of the outcome type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Binary,
    Continuous,
}

/// One row: covariates, binary treatment, outcome and split flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub a: u8,
    pub y: f64,
    pub split: Split,
}

impl Observation {
    pub fn new(x: Vec<f64>, a: u8, y: f64) -> Self {
        Self { x, a, y, split: Split::Test }
    }
}

/// A validated collection of observations sharing one covariate dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    outcome: OutcomeKind,
    names: Vec<String>,
    rows: Vec<Observation>,
}

impl Dataset {
    /// Builds a dataset, checking dimension, treatment coding and outcome
    /// binariness on every row.
    pub fn new(rows: Vec<Observation>, outcome: OutcomeKind) -> Result<Self> {
        let dim = rows.first().map(|r| r.x.len()).unwrap_or(0);
        let names = (0..dim).map(|j| format!("x{j}")).collect();
        Self::with_names(rows, outcome, names)
    }

    pub fn with_names(rows: Vec<Observation>, outcome: OutcomeKind, names: Vec<String>) -> Result<Self> {
        let dim = names.len();
        for (i, r) in rows.iter().enumerate() {
            if r.x.len() != dim {
                return Err(Error::Data(format!(
                    "row {i} has {} covariates, expected {dim}",
                    r.x.len()
                )));
            }
            if r.a > 1 {
                return Err(Error::Data(format!("row {i}: treatment must be 0 or 1, got {}", r.a)));
            }
            if outcome == OutcomeKind::Binary && r.y != 0.0 && r.y != 1.0 {
                return Err(Error::Data(format!("row {i}: binary outcome must be 0 or 1, got {}", r.y)));
            }
            if !r.y.is_finite() || r.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {i} contains a non-finite value")));
            }
        }
        Ok(Self { dim, outcome, names, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outcome(&self) -> OutcomeKind {
        self.outcome
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn covariates(&self) -> Vec<&[f64]> {
        self.rows.iter().map(|r| r.x.as_slice()).collect()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y).collect()
    }

    pub fn treatments(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.a).collect()
    }

    /// Rows satisfying `keep`, in original order.
    pub fn filter(&self, keep: impl Fn(&Observation) -> bool) -> Dataset {
        Dataset {
            dim: self.dim,
            outcome: self.outcome,
            names: self.names.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Rows at the given positions (repeats allowed).
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            dim: self.dim,
            outcome: self.outcome,
            names: self.names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn train(&self) -> Dataset {
        self.filter(|r| r.split == Split::Train)
    }

    pub fn test(&self) -> Dataset {
        self.filter(|r| r.split == Split::Test)
    }

    pub fn count_treated(&self, a: u8) -> usize {
        self.rows.iter().filter(|r| r.a == a).count()
    }

    pub fn require_binary(&self, what: &str) -> Result<()> {
        match self.outcome {
            OutcomeKind::Binary => Ok(()),
            OutcomeKind::Continuous => Err(Error::InvalidArgument(format!("{what} requires a binary outcome"))),
        }
    }

    pub(crate) fn rows_mut(&mut self) -> &mut [Observation] {
        &mut self.rows
    }
}

/// How `split_dataset` assigns rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Independent Bernoulli(fraction) draw per row.
    #[default]
    Bernoulli,
    /// Exactly `round(fraction * n)` training rows chosen by a seeded shuffle.
    ExactCount,
}

/// Randomly assigns each row to the training or test split.
pub fn split_dataset(data: Dataset, fraction_train: f64, seed: u64) -> Result<Dataset> {
    split_dataset_with(data, fraction_train, seed, SplitMode::Bernoulli)
}

pub fn split_dataset_with(mut data: Dataset, fraction_train: f64, seed: u64, mode: SplitMode) -> Result<Dataset> {
    if !(fraction_train > 0.0 && fraction_train < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "training fraction must lie in (0, 1), got {fraction_train}"
        )));
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    let mut rng = stream_rng(seed, streams::SPLIT);
    match mode {
        SplitMode::Bernoulli => {
            for r in data.rows_mut() {
                r.split = if rng.random::<f64>() < fraction_train { Split::Train } else { Split::Test };
            }
        }
        SplitMode::ExactCount => {
            let n = data.len();
            let n_train = (fraction_train * n as f64).round() as usize;
            let mut order: Vec<usize> = (0..n).collect();
            // Fisher-Yates; keeps the draw sequence explicit and stable.
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let rows = data.rows_mut();
            for r in rows.iter_mut() {
                r.split = Split::Test;
            }
            for &i in &order[..n_train] {
                rows[i].split = Split::Train;
            }
        }
    }
    Ok(data)
}

/// Ordered column selection X* from the full covariate vector X.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorSubset {
    indices: Vec<usize>,
}

impl PredictorSubset {
    /// Validates uniqueness and range against covariate dimension `dim`.
    pub fn new(indices: Vec<usize>, dim: usize) -> Result<Self> {
        for (k, &i) in indices.iter().enumerate() {
            if i >= dim {
                return Err(Error::InvalidArgument(format!("predictor index {i} out of range for dimension {dim}")));
            }
            if indices[..k].contains(&i) {
                return Err(Error::InvalidArgument(format!("predictor index {i} repeated")));
            }
        }
        Ok(Self { indices })
    }

    /// X* = X.
    pub fn all(dim: usize) -> Self {
        Self { indices: (0..dim).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_identity(&self, dim: usize) -> bool {
        self.indices.len() == dim && self.indices.iter().enumerate().all(|(k, &i)| k == i)
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        subset_columns(x, self)
    }
}

/// Projection of `x` onto `sel`, preserving the order of `sel`.
pub fn subset_columns(x: &[f64], sel: &PredictorSubset) -> Result<Vec<f64>> {
    sel.indices
        .iter()
        .map(|&i| {
            x.get(i)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("column {i} out of range for length {}", x.len())))
        })
        .collect()
}

/// Pointwise loss L(y, prediction).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[default]
    Squared,
    Absolute,
}

impl Loss {
    #[inline]
    pub fn eval(self, y: f64, pred: f64) -> f64 {
        match self {
            Loss::Squared => (y - pred) * (y - pred),
            Loss::Absolute => (y - pred).abs(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(n: usize) -> Dataset {
        let rows = (0..n).map(|i| Observation::new(vec![i as f64], (i % 2) as u8, 0.0)).collect();
        Dataset::new(rows, OutcomeKind::Binary).unwrap()
    }

    #[test]
    fn split_partitions_rows() {
        let d = split_dataset(toy(1000), 0.5, 11).unwrap();
        assert_eq!(d.train().len() + d.test().len(), 1000);
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_dataset(toy(1000), 0.5, 11).unwrap();
        let b = split_dataset(toy(1000), 0.5, 11).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(toy(1000), 0.5, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_count_within_three_binomial_sds() {
        let sd = (1000.0f64 * 0.25).sqrt();
        for seed in 0..20 {
            let n_train = split_dataset(toy(1000), 0.5, seed).unwrap().train().len() as f64;
            assert!((n_train - 500.0).abs() <= 3.0 * sd, "seed {seed}: {n_train}");
        }
    }

    #[test]
    fn exact_split_hits_the_count() {
        let d = split_dataset_with(toy(101), 0.5, 3, SplitMode::ExactCount).unwrap();
        assert_eq!(d.train().len(), 51);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        for f in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(split_dataset(toy(10), f, 1), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn subset_projection() {
        let x = [1.0, 2.0, 3.0];
        let s = |v: Vec<usize>| PredictorSubset::new(v, 3).unwrap();
        assert_eq!(subset_columns(&x, &s(vec![0, 2])).unwrap(), vec![1.0, 3.0]);
        assert_eq!(subset_columns(&x, &s(vec![2, 0])).unwrap(), vec![3.0, 1.0]);
        assert_eq!(subset_columns(&[5.0], &PredictorSubset::all(1)).unwrap(), vec![5.0]);
        assert!(subset_columns(&[1.0], &s(vec![2])).is_err());
        assert!(PredictorSubset::new(vec![3], 3).is_err());
        assert!(PredictorSubset::new(vec![1, 1], 3).is_err());
    }

    #[test]
    fn dataset_validation() {
        let bad_dim = vec![Observation::new(vec![1.0], 0, 0.0), Observation::new(vec![1.0, 2.0], 0, 0.0)];
        assert!(Dataset::new(bad_dim, OutcomeKind::Continuous).is_err());
        let bad_y = vec![Observation::new(vec![1.0], 0, 0.5)];
        assert!(Dataset::new(bad_y, OutcomeKind::Binary).is_err());
        let bad_a = vec![Observation::new(vec![1.0], 2, 0.0)];
        assert!(Dataset::new(bad_a, OutcomeKind::Continuous).is_err());
    }

    proptest! {
        #[test]
        fn squared_loss_nonnegative_and_zero_on_diagonal(y in -1e3f64..1e3, p in -1e3f64..1e3) {
            prop_assert!(Loss::Squared.eval(y, p) >= 0.0);
            prop_assert!(Loss::Absolute.eval(y, p) >= 0.0);
            prop_assert_eq!(Loss::Squared.eval(y, y), 0.0);
            prop_assert_eq!(Loss::Absolute.eval(y, y), 0.0);
        }
    }
}
