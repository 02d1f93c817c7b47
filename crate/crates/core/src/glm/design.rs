//! Design specifications and frozen design matrices.

use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use super::spline::NaturalSpline;
use crate::error::{Error, Result};

/// Column transform of one design term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "snake_case")]
pub enum Transform {
    Linear,
    Power { k: u32 },
    Spline { df: usize },
    /// Product of `col` with every column in `with`.
    Interaction { with: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub col: usize,
    #[serde(flatten)]
    pub transform: Transform,
}

impl Term {
    pub fn linear(col: usize) -> Self {
        Self { col, transform: Transform::Linear }
    }

    pub fn power(col: usize, k: u32) -> Self {
        Self { col, transform: Transform::Power { k } }
    }

    pub fn spline(col: usize, df: usize) -> Self {
        Self { col, transform: Transform::Spline { df } }
    }

    pub fn interaction(col: usize, with: Vec<usize>) -> Self {
        Self { col, transform: Transform::Interaction { with } }
    }

    fn columns_used(&self) -> Vec<usize> {
        let mut v = vec![self.col];
        if let Transform::Interaction { with } = &self.transform {
            v.extend(with);
        }
        v
    }
}

/// Model formula: a list of terms plus an optional leading intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub terms: Vec<Term>,
    #[serde(default = "default_true")]
    pub include_intercept: bool,
}

fn default_true() -> bool {
    true
}

impl DesignSpec {
    pub fn new(terms: Vec<Term>, include_intercept: bool) -> Result<Self> {
        let spec = Self { terms, include_intercept };
        spec.validate()?;
        Ok(spec)
    }

    pub fn intercept_only() -> Self {
        Self { terms: vec![], include_intercept: true }
    }

    /// Intercept plus main effects of the given columns.
    pub fn linear(cols: impl IntoIterator<Item = usize>) -> Self {
        Self { terms: cols.into_iter().map(Term::linear).collect(), include_intercept: true }
    }

    /// Intercept plus linear and squared terms of the given columns.
    pub fn quadratic(cols: impl IntoIterator<Item = usize> + Clone) -> Self {
        let mut terms: Vec<Term> = cols.clone().into_iter().map(Term::linear).collect();
        terms.extend(cols.into_iter().map(|c| Term::power(c, 2)));
        Self { terms, include_intercept: true }
    }

    /// Intercept plus a natural spline in each column.
    pub fn additive_splines(cols: impl IntoIterator<Item = usize>, df: usize) -> Self {
        Self { terms: cols.into_iter().map(|c| Term::spline(c, df)).collect(), include_intercept: true }
    }

    /// Fully saturated model for binary columns: every product of every
    /// non-empty subset of `cols`.
    pub fn saturated_binary(cols: &[usize]) -> Self {
        let mut terms = Vec::new();
        for mask in 1u32..(1 << cols.len()) {
            let members: Vec<usize> =
                cols.iter().enumerate().filter(|(b, _)| mask & (1 << b) != 0).map(|(_, &c)| c).collect();
            if members.len() == 1 {
                terms.push(Term::linear(members[0]));
            } else {
                terms.push(Term::interaction(members[0], members[1..].to_vec()));
            }
        }
        Self { terms, include_intercept: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() && !self.include_intercept {
            return Err(Error::InvalidArgument("design needs at least one term or an intercept".into()));
        }
        for t in &self.terms {
            match &t.transform {
                Transform::Power { k } if *k < 2 => {
                    return Err(Error::InvalidArgument(format!("power term needs k >= 2, got {k}")))
                }
                Transform::Spline { df } if *df < 3 => {
                    return Err(Error::InvalidArgument(format!("spline term needs df >= 3, got {df}")))
                }
                Transform::Interaction { with } if with.is_empty() => {
                    return Err(Error::InvalidArgument("interaction term needs a partner column".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Largest column index referenced.
    pub fn max_column(&self) -> Option<usize> {
        self.terms.iter().flat_map(Term::columns_used).max()
    }

    /// Freezes data-dependent parts (spline knots) using `rows`.
    pub fn learn(&self, rows: &[&[f64]]) -> Result<Design> {
        self.validate()?;
        let dim = rows.first().map(|r| r.len());
        if let (Some(d), Some(m)) = (dim, self.max_column()) {
            if m >= d {
                return Err(Error::InvalidArgument(format!("design references column {m} but rows have {d}")));
            }
        }
        let mut states = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let state = match t.transform {
                Transform::Spline { df } => {
                    let column: Vec<f64> = rows.iter().map(|r| r[t.col]).collect();
                    TermState::Spline(NaturalSpline::from_quantiles(&column, df)?)
                }
                _ => TermState::Plain,
            };
            states.push(state);
        }
        Ok(Design { spec: self.clone(), states })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TermState {
    Plain,
    Spline(NaturalSpline),
}

/// A design specification with its learned state; maps covariate vectors
/// to design rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    spec: DesignSpec,
    states: Vec<TermState>,
}

impl Design {
    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    pub fn ncols(&self) -> usize {
        let terms: usize = self
            .states
            .iter()
            .map(|s| match s {
                TermState::Spline(sp) => sp.df(),
                TermState::Plain => 1,
            })
            .sum();
        usize::from(self.spec.include_intercept) + terms
    }

    /// Design row for one covariate vector.
    pub fn row_into(&self, x: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if self.spec.include_intercept {
            out.push(1.0);
        }
        for (t, s) in self.spec.terms.iter().zip(&self.states) {
            let v = *x
                .get(t.col)
                .ok_or_else(|| Error::InvalidArgument(format!("column {} out of range for length {}", t.col, x.len())))?;
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite covariate in column {}", t.col)));
            }
            match (&t.transform, s) {
                (Transform::Linear, _) => out.push(v),
                (Transform::Power { k }, _) => out.push(v.powi(*k as i32)),
                (Transform::Spline { .. }, TermState::Spline(sp)) => sp.eval_into(v, out),
                (Transform::Interaction { with }, _) => {
                    let mut prod = v;
                    for &c in with {
                        let w = *x.get(c).ok_or_else(|| {
                            Error::InvalidArgument(format!("column {c} out of range for length {}", x.len()))
                        })?;
                        if !w.is_finite() {
                            return Err(Error::Data(format!("non-finite covariate in column {c}")));
                        }
                        prod *= w;
                    }
                    out.push(prod);
                }
                (Transform::Spline { .. }, TermState::Plain) => unreachable!("spline term without knots"),
            }
        }
        Ok(())
    }

    pub fn row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.ncols());
        self.row_into(x, &mut out)?;
        Ok(out)
    }

    pub fn matrix(&self, rows: &[&[f64]]) -> Result<Matrix> {
        let mut m = Matrix::zeros(0, self.ncols());
        let mut buf = Vec::with_capacity(self.ncols());
        for r in rows {
            buf.clear();
            self.row_into(r, &mut buf)?;
            m.push_row(&buf);
        }
        Ok(m)
    }
}

/// Learns the design on `rows` and returns it with the design matrix.
pub fn build_design(rows: &[&[f64]], spec: &DesignSpec) -> Result<(Design, Matrix)> {
    let design = spec.learn(rows)?;
    let m = design.matrix(rows)?;
    Ok((design, m))
}
