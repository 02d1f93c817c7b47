//! Dense row-major matrices and a Cholesky solver for normal equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot below which a column is treated as linearly dependent.
const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for r in rows {
            if r.len() != ncols {
                return Err(Error::InvalidArgument("ragged matrix rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { nrows: rows.len(), ncols, data })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.ncols);
        self.data.extend_from_slice(row);
        self.nrows += 1;
    }

    /// X β
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|i| dot(self.row(i), beta)).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Accumulates X'WX and X'Wz over rows with positive weight.
pub fn weighted_normal_equations(x: &Matrix, w: &[f64], z: &[f64]) -> (Matrix, Vec<f64>) {
    let p = x.ncols();
    let mut xtwx = Matrix::zeros(p, p);
    let mut xtwz = vec![0.0; p];
    for i in 0..x.nrows() {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        let r = x.row(i);
        for j in 0..p {
            let wr = wi * r[j];
            xtwz[j] += wr * z[i];
            for k in 0..=j {
                xtwx.data[j * p + k] += wr * r[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            xtwx.data[k * p + j] = xtwx.data[j * p + k];
        }
    }
    (xtwx, xtwz)
}

/// Solves a symmetric positive-definite system by Cholesky factorisation.
/// A pivot that collapses relative to its diagonal entry is reported as
/// rank deficiency rather than regularised away.
pub fn cholesky_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let p = a.ncols();
    debug_assert_eq!(a.nrows(), p);
    let mut l = vec![0.0; p * p];
    for j in 0..p {
        let ajj = a.get(j, j);
        let mut d = ajj;
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if !(ajj > 0.0) || !(d > PIVOT_TOL * ajj) {
            return Err(Error::RankDeficient(format!("design column {j} is (nearly) collinear")));
        }
        let djj = d.sqrt();
        l[j * p + j] = djj;
        for i in j + 1..p {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / djj;
        }
    }
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    Ok(x)
}
