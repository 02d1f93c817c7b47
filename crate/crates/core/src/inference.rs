//! Nonparametric bootstrap and Monte Carlo summaries.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::spline::quantile_sorted;
use crate::longitudinal::SequentialDataset;
use crate::parallel::{map_indexed, Parallelism};
use crate::rng::{stream_rng, streams};

/// Largest fraction of bootstrap replicates that may fail.
pub const MAX_DROP_FRACTION: f64 = 0.10;

/// Data that can be resampled by independent units.
pub trait Resample: Sync + Sized {
    fn n_units(&self) -> usize;
    fn resample(&self, idx: &[usize]) -> Self;
}

impl Resample for Dataset {
    fn n_units(&self) -> usize {
        self.len()
    }

    fn resample(&self, idx: &[usize]) -> Self {
        self.select(idx)
    }
}

/// Subjects (whole trajectories) are the resampling unit.
impl Resample for SequentialDataset {
    fn n_units(&self) -> usize {
        self.len()
    }

    fn resample(&self, idx: &[usize]) -> Self {
        self.select(idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    #[default]
    Percentile,
    /// point ± 1.96 se
    Wald,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point: f64,
    pub se: f64,
    /// Successful replicates.
    pub replicates: usize,
    pub dropped: usize,
    pub ci_95: (f64, f64),
    pub ci_method: CiMethod,
    pub seed: u64,
}

/// Resample indices for replicate `r`.
pub fn bootstrap_indices(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, streams::BOOTSTRAP + r as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Bootstrap of `estimator` over `b` resamples of the units of `data`.
///
/// The estimator receives each resample and should refit whatever it needs.
/// Failed replicates are dropped and counted; more than 10% failures is an
/// error. Replicate r always uses stream (seed, r), so the result does not
/// depend on scheduling.
pub fn bootstrap<D, F>(data: &D, estimator: F, b: usize, seed: u64, ci: CiMethod, par: Parallelism) -> Result<BootstrapResult>
where
    D: Resample,
    F: Fn(&D) -> Result<f64> + Sync + Send,
{
    if b < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bootstrap replicates, got {b}")));
    }
    let n = data.n_units();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot bootstrap an empty dataset".into()));
    }
    let point = estimator(data)?;
    let outcomes = map_indexed(b, par, |r| estimator(&data.resample(&bootstrap_indices(n, seed, r))));
    let mut values = Vec::with_capacity(b);
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(v) => log::debug!("bootstrap replicate {r} returned {v}"),
            Err(e) => log::debug!("bootstrap replicate {r} failed: {e}"),
        }
    }
    let dropped = b - values.len();
    if dropped as f64 > MAX_DROP_FRACTION * b as f64 || values.len() < 2 {
        return Err(Error::ReplicateFailures { failed: dropped, total: b, context: "bootstrap".into() });
    }
    if dropped > 0 {
        log::warn!("{dropped} of {b} bootstrap replicates failed and were dropped");
    }
    let (_, se) = mean_sd(&values);
    let ci_95 = match ci {
        CiMethod::Percentile => {
            values.sort_by(f64::total_cmp);
            (quantile_sorted(&values, 0.025), quantile_sorted(&values, 0.975))
        }
        CiMethod::Wald => (point - 1.96 * se, point + 1.96 * se),
    };
    Ok(BootstrapResult { point, se, replicates: values.len(), dropped, ci_95, ci_method: ci, seed })
}

/// Mean and sample SD (zero for a single value), summed in sorted order so
/// the result does not depend on the order of `v`.
fn mean_sd(v: &[f64]) -> (f64, f64) {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    if s.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = s.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub mean: f64,
    pub sd: f64,
    pub bias: f64,
    pub rel_bias: f64,
    pub sqrt_n_sd: f64,
    pub sqrt_n_bias: f64,
    pub truth: f64,
    pub reps: usize,
    pub n_test: usize,
}

/// Mean, SD, bias and relative bias of Monte Carlo estimates; the scaled
/// columns multiply SD and bias by √n_test.
pub fn mc_summarize(estimates: &[f64], truth: f64, n_test: usize) -> Result<McSummary> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no estimates to summarize".into()));
    }
    if truth == 0.0 {
        return Err(Error::Undefined("relative bias with a true value of zero".into()));
    }
    let (mean, sd) = mean_sd(estimates);
    let bias = mean - truth;
    let root_n = (n_test as f64).sqrt();
    Ok(McSummary {
        mean,
        sd,
        bias,
        rel_bias: bias / truth,
        sqrt_n_sd: root_n * sd,
        sqrt_n_bias: root_n * bias,
        truth,
        reps: estimates.len(),
        n_test,
    })
}
