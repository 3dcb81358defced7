use nalgebra::DVector;

use super::{Family, FittedModel};
use crate::error::{Error, Result};
use crate::rng::{draw_chi_square, draw_mvn, psd_sqrt, RandomStream};

/// Coefficients (and residual variance, linear only) perturbed around a fit
/// for one imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDraw {
    pub beta_tilde: DVector<f64>,
    pub sigma2_tilde: Option<f64>,
}

fn linear_df(fit: &FittedModel) -> Result<u64> {
    if fit.family != Family::Linear {
        return Err(Error::InvalidArgument("linear draw needs a linear fit".into()));
    }
    let df = fit.n as i64 - fit.p as i64 - 1;
    if df < 1 {
        return Err(Error::InsufficientRows { n: fit.n, p: fit.p });
    }
    Ok(df as u64)
}

/// `σ̃² = σ̂²(n-p-1)/ξ` with `ξ ~ χ²_{n-p-1}`, then
/// `β̃ ~ N(β̂, (σ̃²/σ̂²) Var(β̂))`.
pub fn draw_linear_params(fit: &FittedModel, stream: &mut RandomStream) -> Result<ParameterDraw> {
    let df = linear_df(fit)?;
    let xi = draw_chi_square(stream, df)?;
    let z = DVector::from_fn(fit.beta.len(), |_, _| stream.standard_normal());
    linear_draw_from(fit, xi, &z)
}

/// The linear draw with its randomness supplied: `xi` is the chi-square
/// variate and `z` a standard-normal vector.
pub fn linear_draw_from(fit: &FittedModel, xi: f64, z: &DVector<f64>) -> Result<ParameterDraw> {
    let df = linear_df(fit)? as f64;
    let sigma2 = fit.sigma2.unwrap_or(0.0);
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument("linear draw needs a positive residual variance".into()));
    }
    if z.len() != fit.beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} normals for {} coefficients",
            z.len(),
            fit.beta.len()
        )));
    }
    let sigma2_tilde = sigma2 * df / xi;
    let factor = psd_sqrt(&fit.cov_beta)?;
    let scale = (sigma2_tilde / sigma2).sqrt();
    let beta_tilde = &fit.beta + factor * z * scale;
    Ok(ParameterDraw {
        beta_tilde,
        sigma2_tilde: Some(sigma2_tilde),
    })
}

/// `θ̃ ~ N(θ̂, Var(θ̂))`; the dispersion of a negative-binomial fit is not
/// perturbed.
pub fn draw_glm_params(fit: &FittedModel, stream: &mut RandomStream) -> Result<ParameterDraw> {
    if fit.family == Family::Linear {
        return Err(Error::InvalidArgument("use draw_linear_params for linear fits".into()));
    }
    Ok(ParameterDraw {
        beta_tilde: draw_mvn(stream, &fit.beta, &fit.cov_beta)?,
        sigma2_tilde: None,
    })
}
