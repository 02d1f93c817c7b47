use serde::{Deserialize, Serialize};

use super::{EstimatorKind, Measure, PerfEstimate};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::NuisanceSet;
use crate::regime::Regime;
use crate::tailor::Predictor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalPoint {
    pub predicted: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    /// `bins` equal-count groups of the sorted predictions.
    Binned { bins: usize },
    /// Local-linear tricube smoother evaluated on `grid` points; the
    /// bandwidth defaults to 0.3 of the prediction range.
    LocalLinear { grid: usize, bandwidth: Option<f64> },
}

impl Default for CalibrationMethod {
    fn default() -> Self {
        CalibrationMethod::Binned { bins: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationKind {
    Naive,
    #[serde(rename = "ipw")]
    IPW,
    #[serde(rename = "om")]
    OM,
}

/// Per-row response and weight feeding the curve.
fn responses(test: &Dataset, kind: CalibrationKind, nuis: Option<&NuisanceSet>) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = test.len();
    match kind {
        CalibrationKind::Naive => Ok((test.outcomes(), vec![1.0; n])),
        CalibrationKind::IPW => {
            let nuis = nuis.ok_or(Error::MissingNuisance("propensity"))?;
            let e = nuis.propensity()?;
            let mut w = vec![0.0; n];
            for (i, r) in test.rows().iter().enumerate() {
                if r.a == nuis.target_a {
                    w[i] = 1.0 / e.prob(&r.x)?;
                }
            }
            Ok((test.outcomes(), w))
        }
        CalibrationKind::OM => {
            let nuis = nuis.ok_or(Error::MissingNuisance("outcome model"))?;
            let h = nuis.cond_loss()?;
            let q = test
                .rows()
                .iter()
                .map(|r| {
                    h.outcome_prob(&r.x)?.ok_or_else(|| {
                        Error::InvalidArgument("outcome-model calibration needs a fitted outcome probability".into())
                    })
                })
                .collect::<Result<_>>()?;
            Ok((q, vec![1.0; n]))
        }
    }
}

fn binned(pred: &[f64], resp: &[f64], w: &[f64], bins: usize) -> Result<Vec<CalPoint>> {
    let n = pred.len();
    if bins == 0 || bins > n {
        return Err(Error::InvalidArgument(format!("cannot form {bins} bins from {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| pred[i].total_cmp(&pred[j]));
    let mut out = Vec::with_capacity(bins);
    for b in 0..bins {
        let members = &idx[b * n / bins..(b + 1) * n / bins];
        let predicted = members.iter().map(|&i| pred[i]).sum::<f64>() / members.len() as f64;
        let (mut sw, mut swy) = (0.0, 0.0);
        for &i in members {
            sw += w[i];
            swy += w[i] * resp[i];
        }
        if sw <= 0.0 {
            return Err(Error::Positivity(format!("calibration bin {b} contains no rows at the target treatment")));
        }
        out.push(CalPoint { predicted, observed: swy / sw });
    }
    Ok(out)
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

fn local_linear(pred: &[f64], resp: &[f64], w: &[f64], grid: usize, bandwidth: Option<f64>) -> Result<Vec<CalPoint>> {
    if grid < 2 {
        return Err(Error::InvalidArgument("smoother grid needs at least two points".into()));
    }
    let lo = pred.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pred.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range <= 0.0 {
        return Err(Error::Undefined("predictions are constant; no curve to smooth".into()));
    }
    let h = bandwidth.unwrap_or(0.3 * range);
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    let mut out = Vec::with_capacity(grid);
    for g in 0..grid {
        let x0 = lo + range * g as f64 / (grid - 1) as f64;
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..pred.len() {
            let k = w[i] * tricube((pred[i] - x0).abs() / h);
            if k == 0.0 {
                continue;
            }
            let d = pred[i] - x0;
            s0 += k;
            s1 += k * d;
            s2 += k * d * d;
            t0 += k * resp[i];
            t1 += k * d * resp[i];
        }
        if s0 <= 0.0 {
            continue;
        }
        let det = s0 * s2 - s1 * s1;
        let observed = if det > 1e-12 * s0 * s2.max(f64::MIN_POSITIVE) { (s2 * t0 - s1 * t1) / det } else { t0 / s0 };
        out.push(CalPoint { predicted: x0, observed });
    }
    if out.is_empty() {
        return Err(Error::Positivity("no rows at the target treatment near any grid point".into()));
    }
    Ok(out)
}

/// Calibration curve of `model`: predicted risk against (counterfactual)
/// observed risk.
pub fn calibration_curve(
    test: &Dataset,
    model: &dyn Predictor,
    nuis: Option<&NuisanceSet>,
    method: CalibrationMethod,
    kind: CalibrationKind,
) -> Result<PerfEstimate> {
    test.require_binary("calibration")?;
    if test.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    let pred = model.predict_all(test)?;
    let (resp, w) = responses(test, kind, nuis)?;
    let curve = match method {
        CalibrationMethod::Binned { bins } => binned(&pred, &resp, &w, bins)?,
        CalibrationMethod::LocalLinear { grid, bandwidth } => local_linear(&pred, &resp, &w, grid, bandwidth)?,
    };
    let (est, regime) = match kind {
        CalibrationKind::Naive => (EstimatorKind::Naive, "observed".to_string()),
        CalibrationKind::IPW => (EstimatorKind::IPW, Regime::Static(nuis.map_or(0, |n| n.target_a)).describe()),
        CalibrationKind::OM => (EstimatorKind::OM, Regime::Static(nuis.map_or(0, |n| n.target_a)).describe()),
    };
    Ok(PerfEstimate {
        kind: est,
        measure: Measure::Calibration,
        regime,
        value: None,
        curve: Some(curve),
        se: None,
        n_test: test.len(),
        followers: None,
    })
}

/// `predicted,observed` rows.
pub fn calibration_csv(curve: &[CalPoint]) -> String {
    let mut s = String::from("predicted,observed\n");
    for p in curve {
        s.push_str(&format!("{},{}\n", p.predicted, p.observed));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_are_equal_count() {
        let pred: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let resp = vec![1.0; 25];
        let c = binned(&pred, &resp, &[1.0; 25], 10).unwrap();
        assert_eq!(c.len(), 10);
        assert!(c.windows(2).all(|w| w[0].predicted < w[1].predicted));
        assert!(binned(&pred, &resp, &[1.0; 25], 26).is_err());
    }

    #[test]
    fn weighted_bin_mean() {
        let pred = [0.1, 0.2];
        let c = binned(&pred, &[1.0, 0.0], &[3.0, 1.0], 1).unwrap();
        assert_eq!(c[0].observed, 0.75);
        assert!(matches!(binned(&pred, &[1.0, 0.0], &[0.0, 0.0], 1), Err(Error::Positivity(_))));
    }

    #[test]
    fn smoother_reproduces_lines() {
        let pred: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let resp: Vec<f64> = pred.iter().map(|p| 0.1 + 0.8 * p).collect();
        let c = local_linear(&pred, &resp, &vec![1.0; 200], 100, None).unwrap();
        assert_eq!(c.len(), 100);
        for p in c {
            assert!((p.observed - (0.1 + 0.8 * p.predicted)).abs() < 1e-10);
        }
    }

    #[test]
    fn tricube_support() {
        assert_eq!(tricube(0.0), 1.0);
        assert_eq!(tricube(1.0), 0.0);
        assert!(tricube(0.5) > 0.0);
    }
}
