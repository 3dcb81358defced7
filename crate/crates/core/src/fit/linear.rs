use nalgebra::DVector;

use super::{spd_inverse, spd_solve, DesignMatrix, Family, FittedModel};
use crate::error::{Error, Result};

/// Ordinary least squares with `σ̂² = RSS / (n - p)` and
/// `Var(β̂) = σ̂² (XᵀX)⁻¹` on the retained columns.
pub fn fit_linear(design: &DesignMatrix, y: &[f64]) -> Result<FittedModel> {
    let n = design.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("{} responses for {n} rows", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear response".into()));
    }
    let reduced = design.reduce()?;
    let p = reduced.keep.len();
    if n <= p + 1 {
        return Err(Error::InsufficientRows { n, p });
    }
    let x = &reduced.x;
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * x;
    let xty = x.transpose() * &yv;
    let beta = spd_solve(&xtx, &xty)?;
    let resid = &yv - x * &beta;
    let rss = resid.norm_squared();
    let sigma2 = rss / (n - p) as f64;
    let cov = spd_inverse(&xtx)? * sigma2;
    let log_likelihood = if sigma2 > 0.0 {
        let s2_ml = rss / n as f64;
        -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * s2_ml).ln() + 1.0)
    } else {
        f64::INFINITY
    };
    let (beta, cov_beta) = reduced.expand(&beta, &cov);
    Ok(FittedModel {
        family: Family::Linear,
        labels: design.labels.clone(),
        beta,
        cov_beta,
        sigma2: Some(sigma2),
        dispersion: None,
        n,
        p,
        dropped_columns: reduced.dropped,
        notes: Vec::new(),
        log_likelihood,
        iterations: 1,
    })
}
