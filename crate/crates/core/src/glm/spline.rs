//! Natural cubic spline basis (truncated-power form) with quantile knots.
//!
//! With knots ξ_1 < ... < ξ_K the basis is
//! `t, d_1 - d_{K-1}, ..., d_{K-2} - d_{K-1}` where
//! `d_k(t) = ((t - ξ_k)_+^3 - (t - ξ_K)_+^3) / (ξ_K - ξ_k)`,
//! giving `K - 1 = df` columns (no intercept). The basis is linear outside
//! the boundary knots. Inputs are rescaled to the boundary range first to
//! keep the cubic terms well conditioned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalSpline {
    /// All knots on the original scale, boundary knots included.
    knots: Vec<f64>,
}

impl NaturalSpline {
    /// Knots at the `j/df` quantiles (j = 0..df) of `values`.
    pub fn from_quantiles(values: &[f64], df: usize) -> Result<Self> {
        if df < 3 {
            return Err(Error::InvalidArgument(format!("spline df must be >= 3, got {df}")));
        }
        if values.is_empty() {
            return Err(Error::Data("cannot place spline knots on an empty column".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let knots: Vec<f64> = (0..=df).map(|j| quantile_sorted(&sorted, j as f64 / df as f64)).collect();
        Self::with_knots(knots)
    }

    pub fn with_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 4 {
            return Err(Error::InvalidArgument("natural spline needs at least 4 knots".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Data(format!(
                "spline knots must be strictly increasing (column has too few distinct values): {knots:?}"
            )));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn df(&self) -> usize {
        self.knots.len() - 1
    }

    /// Appends the `df` basis values at `x` to `out`.
    pub fn eval_into(&self, x: f64, out: &mut Vec<f64>) {
        let k = self.knots.len();
        let lo = self.knots[0];
        let span = self.knots[k - 1] - lo;
        let t = (x - lo) / span;
        let xi = |j: usize| (self.knots[j] - lo) / span;
        let last = xi(k - 1);
        let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
        let d = |j: usize| (cube(t - xi(j)) - cube(t - last)) / (last - xi(j));
        let d_last = d(k - 2);
        out.push(t);
        for j in 0..k - 2 {
            out.push(d(j) - d_last);
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.df());
        self.eval_into(x, &mut v);
        v
    }
}

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
