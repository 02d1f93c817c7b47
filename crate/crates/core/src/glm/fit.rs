//! Weighted least squares and weighted logistic regression (IRLS).

use serde::{Deserialize, Serialize};

use super::design::{Design, DesignSpec};
use super::linalg::{cholesky_solve, dot, weighted_normal_equations, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    BinomialLogit,
}

#[derive(Debug, Clone, Copy)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Stop when max |Δβ| or the sup-norm of the weighted score drops below this.
    pub tol: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-10 }
    }
}

#[inline]
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// log(1 + e^eta) without overflow.
#[inline]
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// A fitted generalized linear model together with its frozen design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub family: Family,
    pub design: Design,
    pub converged: bool,
    pub iterations: usize,
}

impl GlmFit {
    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        let row = self.design.row(x)?;
        Ok(dot(&row, &self.coefficients))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        predict_glm(self, x)
    }
}

/// Weighted log-likelihood (Gaussian: minus half the weighted RSS).
pub fn log_likelihood(x: &Matrix, y: &[f64], w: &[f64], beta: &[f64], family: Family) -> f64 {
    let mut ll = 0.0;
    for i in 0..x.nrows() {
        if w[i] == 0.0 {
            continue;
        }
        let eta = dot(x.row(i), beta);
        ll += w[i]
            * match family {
                Family::Gaussian => -0.5 * (y[i] - eta) * (y[i] - eta),
                Family::BinomialLogit => y[i] * eta - log1p_exp(eta),
            };
    }
    ll
}

/// Gradient of `log_likelihood`: Σ wᵢ (yᵢ − μᵢ) xᵢ.
pub fn score(x: &Matrix, y: &[f64], w: &[f64], beta: &[f64], family: Family) -> Vec<f64> {
    let mut g = vec![0.0; x.ncols()];
    for i in 0..x.nrows() {
        if w[i] == 0.0 {
            continue;
        }
        let r = x.row(i);
        let eta = dot(r, beta);
        let mu = match family {
            Family::Gaussian => eta,
            Family::BinomialLogit => expit(eta),
        };
        let c = w[i] * (y[i] - mu);
        for (gj, xj) in g.iter_mut().zip(r) {
            *gj += c * xj;
        }
    }
    g
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Fits `family` to `(x, y)` with prior weights `w`.
///
/// Gaussian is solved in one weighted least-squares step. BinomialLogit
/// runs Newton/IRLS from β = 0 with step halving; a fit that does not meet
/// the tolerance within `max_iter` iterations is returned with
/// `converged = false` and a logged warning.
pub fn fit_glm(design: Design, x: &Matrix, y: &[f64], w: &[f64], family: Family) -> Result<GlmFit> {
    fit_glm_with(design, x, y, w, family, GlmOptions::default())
}

pub fn fit_glm_with(
    design: Design,
    x: &Matrix,
    y: &[f64],
    w: &[f64],
    family: Family,
    opts: GlmOptions,
) -> Result<GlmFit> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidArgument(format!(
            "design has {n} rows but y has {} and weights {}",
            y.len(),
            w.len()
        )));
    }
    if p != design.ncols() {
        return Err(Error::InvalidArgument("matrix does not match design".into()));
    }
    if let Some(bad) = w.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("weights must be finite and nonnegative, got {bad}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite response".into()));
    }
    let positive = w.iter().filter(|v| **v > 0.0).count();
    if positive < p {
        return Err(Error::RankDeficient(format!("{positive} positively weighted rows for {p} coefficients")));
    }

    match family {
        Family::Gaussian => {
            let (xtwx, xtwy) = weighted_normal_equations(x, w, y);
            let beta = cholesky_solve(&xtwx, &xtwy)?;
            Ok(GlmFit { coefficients: beta, family, design, converged: true, iterations: 1 })
        }
        Family::BinomialLogit => {
            if let Some(bad) = y.iter().zip(w).find(|(v, wi)| **wi > 0.0 && !(0.0..=1.0).contains(*v)) {
                return Err(Error::Data(format!("binomial response must lie in [0, 1], got {}", bad.0)));
            }
            irls_logit(design, x, y, w, opts)
        }
    }
}

fn irls_logit(design: Design, x: &Matrix, y: &[f64], w: &[f64], opts: GlmOptions) -> Result<GlmFit> {
    let n = x.nrows();
    let p = x.ncols();
    let mut beta = vec![0.0; p];
    let mut ll = log_likelihood(x, y, w, &beta, Family::BinomialLogit);
    let mut converged = false;
    let mut iterations = 0;
    let mut ww = vec![0.0; n];
    let mut resid = vec![0.0; n];

    while iterations < opts.max_iter {
        iterations += 1;
        for i in 0..n {
            let mu = expit(dot(x.row(i), &beta));
            ww[i] = w[i] * mu * (1.0 - mu);
            resid[i] = if ww[i] > 0.0 { (y[i] - mu) / (mu * (1.0 - mu)) } else { 0.0 };
        }
        // Newton step: (X' W X) δ = X' w (y - μ), written with the working
        // residual so the same accumulator serves both sides.
        let (info, grad) = weighted_normal_equations(x, &ww, &resid);
        if sup_norm(&grad) < opts.tol {
            converged = true;
            break;
        }
        let step = cholesky_solve(&info, &grad)?;

        let mut scale = 1.0;
        let mut candidate: Vec<f64>;
        loop {
            candidate = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_ll = log_likelihood(x, y, w, &candidate, Family::BinomialLogit);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) || scale < 1e-6 {
                ll = cand_ll;
                break;
            }
            scale *= 0.5;
        }
        let change = sup_norm(&candidate.iter().zip(&beta).map(|(a, b)| a - b).collect::<Vec<_>>());
        beta = candidate;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("logistic IRLS did not converge in {} iterations", opts.max_iter);
    }
    Ok(GlmFit { coefficients: beta, family: Family::BinomialLogit, design, converged, iterations })
}

/// Learns the design on rows with positive weight, then fits.
pub fn fit_glm_rows(spec: &DesignSpec, rows: &[&[f64]], y: &[f64], w: &[f64], family: Family) -> Result<GlmFit> {
    if rows.len() != w.len() {
        return Err(Error::InvalidArgument("rows and weights differ in length".into()));
    }
    let learn_rows: Vec<&[f64]> = rows.iter().zip(w).filter(|(_, wi)| **wi > 0.0).map(|(r, _)| *r).collect();
    let design = spec.learn(&learn_rows)?;
    let x = design.matrix(rows)?;
    fit_glm(design, &x, y, w, family)
}

/// Unit-weight convenience wrapper around [`fit_glm_rows`].
pub fn fit_glm_unweighted(spec: &DesignSpec, rows: &[&[f64]], y: &[f64], family: Family) -> Result<GlmFit> {
    fit_glm_rows(spec, rows, y, &vec![1.0; rows.len()], family)
}

/// Mean prediction: xᵀβ (Gaussian) or expit(xᵀβ) (BinomialLogit).
pub fn predict_glm(fit: &GlmFit, x: &[f64]) -> Result<f64> {
    let row = fit.design.row(x)?;
    if row.len() != fit.coefficients.len() {
        return Err(Error::InvalidArgument("design row does not match coefficients".into()));
    }
    let eta = dot(&row, &fit.coefficients);
    Ok(match fit.family {
        Family::Gaussian => eta,
        Family::BinomialLogit => expit(eta),
    })
}

/// Clamps a probability into `[lo, hi]`.
#[inline]
pub fn clip_prob(p: f64, (lo, hi): (f64, f64)) -> f64 {
    p.clamp(lo, hi)
}
