//! Maximum-likelihood fitters for the per-interval conditional models and
//! the parameter draws that propagate their estimation uncertainty.
//!
//! | family       | model                                          | response          |
//! |--------------|------------------------------------------------|-------------------|
//! | `Linear`     | normal linear regression                       | continuous value  |
//! | `Logistic`   | logit link                                     | 0/1               |
//! | `ExpHazard`  | constant hazard `exp(wᵀθ)`, right censored     | (exposure, event) |
//! | `NegBin`     | NB2, log link, log-exposure offset             | event count       |
//!
//! Every fitter detects aliased design columns, drops them, and reports the
//! result in the full column space with zero coefficient and zero variance in
//! the dropped positions.

mod design;
mod draws;
mod glm;
mod linear;
mod negbin;

pub use design::DesignMatrix;
pub use draws::{draw_glm_params, draw_linear_params, linear_draw_from, ParameterDraw};
pub use glm::{fit_exp_hazard, fit_logistic, SEPARATION_RIDGE};
pub use linear::fit_linear;
pub use negbin::{fit_negbin, negbin_dispersion_derivatives, POISSON_FALLBACK_DISPERSION};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 50;
pub const COEF_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Linear,
    Logistic,
    ExpHazard,
    NegBin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitNote {
    /// Logistic fit hit separation and was refit with a small ridge penalty.
    Separation,
    /// Negative-binomial dispersion collapsed to zero; coefficients are Poisson.
    PoissonFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub family: Family,
    pub labels: Vec<String>,
    pub beta: DVector<f64>,
    pub cov_beta: DMatrix<f64>,
    /// Residual variance (linear only).
    pub sigma2: Option<f64>,
    /// NB2 dispersion `α` with `Var = μ + αμ²` (negative binomial only).
    pub dispersion: Option<f64>,
    pub n: usize,
    /// Retained (non-aliased) columns.
    pub p: usize,
    pub dropped_columns: Vec<String>,
    pub notes: Vec<FitNote>,
    pub log_likelihood: f64,
    pub iterations: usize,
}

impl FittedModel {
    pub fn has_note(&self, note: FitNote) -> bool {
        self.notes.contains(&note)
    }

    /// Linear predictor `wᵀβ` for one history row.
    pub fn predict(&self, w: &[f64]) -> f64 {
        w.iter().zip(self.beta.iter()).map(|(a, b)| a * b).sum()
    }
}

pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NonFinite("information matrix is not positive definite".into()))?;
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

pub(crate) fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NonFinite("information matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// `|Δ_i| / (|β_i| + 0.1)`, the relative change used as the stopping rule.
pub(crate) fn max_relative_change(step: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    step.iter()
        .zip(beta.iter())
        .map(|(d, b)| d.abs() / (b.abs() + 0.1))
        .fold(0.0, f64::max)
}
