use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Squared relative residual norm below which a column counts as aliased with
/// the columns before it.
const ALIAS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if x.ncols() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns but {} labels",
                x.ncols(),
                labels.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix entry".into()));
        }
        Ok(Self { x, labels })
    }

    /// Builds a design from row vectors that all share `labels`.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<String>) -> Result<Self> {
        let p = labels.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch(format!(
                "row of length {} for {p} labels",
                bad.len()
            )));
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(x, labels)
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    /// Marks columns that are linearly dependent on earlier columns.
    ///
    /// Runs a Cholesky factorisation of `XᵀX` in column order and skips any
    /// pivot whose residual falls below `ALIAS_TOL` times the column's squared
    /// norm, which moves aliased columns out of the way the same way a
    /// limited-pivoting QR does.
    pub fn aliased(&self) -> Vec<bool> {
        let p = self.ncols();
        let xtx = self.x.transpose() * &self.x;
        let mut l = DMatrix::<f64>::zeros(p, p);
        let mut aliased = vec![false; p];
        for j in 0..p {
            let norm2 = xtx[(j, j)];
            let mut d = norm2;
            for k in 0..j {
                if !aliased[k] {
                    d -= l[(j, k)] * l[(j, k)];
                }
            }
            if !(norm2 > 0.0) || d <= ALIAS_TOL * norm2 {
                aliased[j] = true;
                continue;
            }
            let pivot = d.sqrt();
            l[(j, j)] = pivot;
            for i in j + 1..p {
                let mut s = xtx[(i, j)];
                for k in 0..j {
                    if !aliased[k] {
                        s -= l[(i, k)] * l[(j, k)];
                    }
                }
                l[(i, j)] = s / pivot;
            }
        }
        aliased
    }

    pub(crate) fn reduce(&self) -> Result<Reduced> {
        let aliased = self.aliased();
        let keep: Vec<usize> = (0..self.ncols()).filter(|&j| !aliased[j]).collect();
        if keep.is_empty() {
            return Err(Error::AllAliased);
        }
        let x = self.x.select_columns(&keep);
        let dropped = (0..self.ncols())
            .filter(|&j| aliased[j])
            .map(|j| self.labels[j].clone())
            .collect();
        Ok(Reduced {
            x,
            keep,
            dropped,
            p_full: self.ncols(),
        })
    }
}

pub(crate) struct Reduced {
    pub x: DMatrix<f64>,
    pub keep: Vec<usize>,
    pub dropped: Vec<String>,
    pub p_full: usize,
}

impl Reduced {
    /// Embeds reduced coefficients and covariance back into the full column
    /// space; aliased columns get zero coefficient and zero variance.
    pub fn expand(&self, beta: &DVector<f64>, cov: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let mut b = DVector::zeros(self.p_full);
        let mut c = DMatrix::zeros(self.p_full, self.p_full);
        for (a, &i) in self.keep.iter().enumerate() {
            b[i] = beta[a];
            for (bb, &j) in self.keep.iter().enumerate() {
                c[(i, j)] = cov[(a, bb)];
            }
        }
        (b, c)
    }
}
