use nalgebra::{DMatrix, DVector};

use super::{
    max_relative_change, spd_inverse, spd_solve, DesignMatrix, Family, FitNote, FittedModel,
    COEF_TOLERANCE, MAX_ITERATIONS,
};
use crate::error::{Error, Result};

/// Ridge added to the Hessian diagonal when a logistic fit separates.
pub const SEPARATION_RIDGE: f64 = 1e-4;

/// Fitted probabilities this close to 0 or 1 count as separation.
const SEPARATION_PROB: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Canonical {
    Logistic,
    Poisson,
}

pub(crate) struct NewtonFit {
    pub beta: DVector<f64>,
    pub information: DMatrix<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-likelihood up to a constant: Bernoulli, or Poisson with `offset` in
/// the linear predictor.
pub(crate) fn canonical_loglik(
    family: Canonical,
    x: &DMatrix<f64>,
    y: &[f64],
    offset: &[f64],
    beta: &DVector<f64>,
) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .zip(offset)
        .map(|((e, yi), o)| match family {
            Canonical::Logistic => yi * e - log1p_exp(*e),
            Canonical::Poisson => yi * e - (e + o).exp(),
        })
        .sum()
}

/// Newton-Raphson with step halving for a canonical-link GLM. `ridge`
/// penalises `ridge/2 · |β|²`.
pub(crate) fn newton_canonical(
    family: Canonical,
    x: &DMatrix<f64>,
    y: &[f64],
    offset: &[f64],
    ridge: f64,
    start: DVector<f64>,
) -> Result<NewtonFit> {
    let p = x.ncols();
    let objective = |b: &DVector<f64>| canonical_loglik(family, x, y, offset, b) - 0.5 * ridge * b.norm_squared();
    let mut beta = start;
    let mut current = objective(&beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=MAX_ITERATIONS {
        iterations = it;
        let (grad, info) = score_and_information(family, x, y, offset, &beta, ridge);
        let Ok(step) = spd_solve(&info, &grad) else {
            break;
        };
        let mut t = 1.0;
        let mut candidate = &beta + &step;
        let mut value = objective(&candidate);
        while !(value >= current - 1e-12 * current.abs()) && t > 1e-10 {
            t *= 0.5;
            candidate = &beta + &step * t;
            value = objective(&candidate);
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("log-likelihood".into()));
        }
        let applied = &step * t;
        beta = candidate;
        current = value;
        if max_relative_change(&applied, &beta) < COEF_TOLERANCE {
            converged = true;
            break;
        }
    }
    let (_, information) = score_and_information(family, x, y, offset, &beta, ridge);
    debug_assert_eq!(information.nrows(), p);
    // A coefficient that ran off far enough leaves the information singular
    // even though the steps have become small.
    if information.clone().cholesky().is_none() {
        converged = false;
    }
    Ok(NewtonFit {
        log_likelihood: canonical_loglik(family, x, y, offset, &beta),
        beta,
        information,
        iterations,
        converged,
    })
}

pub(crate) fn score_and_information(
    family: Canonical,
    x: &DMatrix<f64>,
    y: &[f64],
    offset: &[f64],
    beta: &DVector<f64>,
    ridge: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let p = x.ncols();
    let eta = x * beta;
    let mut grad = -(beta * ridge);
    let mut info = DMatrix::<f64>::identity(p, p) * ridge;
    for i in 0..x.nrows() {
        let (mu, w) = match family {
            Canonical::Logistic => {
                let m = inv_logit(eta[i]);
                (m, m * (1.0 - m))
            }
            Canonical::Poisson => {
                let m = (eta[i] + offset[i]).exp();
                (m, m)
            }
        };
        let r = y[i] - mu;
        let row = x.row(i);
        for a in 0..p {
            grad[a] += row[a] * r;
            let wa = w * row[a];
            for b in 0..=a {
                info[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    (grad, info)
}

/// Start vector that puts `log(rate)` on the first constant column.
pub(crate) fn start_on_constant(x: &DMatrix<f64>, value: f64) -> DVector<f64> {
    let mut b = DVector::zeros(x.ncols());
    if !value.is_finite() {
        return b;
    }
    for j in 0..x.ncols() {
        let c = x[(0, j)];
        if c != 0.0 && x.column(j).iter().all(|&v| v == c) {
            b[j] = value / c;
            break;
        }
    }
    b
}

/// Logistic regression by Newton-Raphson (equivalently IRLS).
///
/// If the response is constant, the iterations fail to converge, or fitted
/// probabilities collapse onto 0 or 1, the data are treated as separated and
/// the fit is repeated with [`SEPARATION_RIDGE`] on the Hessian diagonal; the
/// result then carries [`FitNote::Separation`].
pub fn fit_logistic(design: &DesignMatrix, y: &[f64]) -> Result<FittedModel> {
    let n = design.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("{} responses for {n} rows", y.len())));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("logistic response must be 0/1".into()));
    }
    let reduced = design.reduce()?;
    let p = reduced.keep.len();
    if n <= p {
        return Err(Error::InsufficientRows { n, p });
    }
    let x = &reduced.x;
    let offset = vec![0.0; n];
    let ybar = y.iter().sum::<f64>() / n as f64;
    let degenerate = ybar == 0.0 || ybar == 1.0;

    let mut notes = Vec::new();
    let mut fit = None;
    if !degenerate {
        let start = start_on_constant(x, (ybar / (1.0 - ybar)).ln());
        let f = newton_canonical(Canonical::Logistic, x, y, &offset, 0.0, start)?;
        let eta = x * &f.beta;
        let extreme = eta
            .iter()
            .any(|&e| inv_logit(e) < SEPARATION_PROB || inv_logit(e) > 1.0 - SEPARATION_PROB);
        if f.converged && !extreme {
            fit = Some(f);
        }
    }
    let fit = match fit {
        Some(f) => f,
        None => {
            notes.push(FitNote::Separation);
            let f = newton_canonical(
                Canonical::Logistic,
                x,
                y,
                &offset,
                SEPARATION_RIDGE,
                DVector::zeros(p),
            )?;
            if !f.converged {
                return Err(Error::NonConvergence("logistic regression"));
            }
            f
        }
    };
    let cov = spd_inverse(&fit.information)?;
    let (beta, cov_beta) = reduced.expand(&fit.beta, &cov);
    Ok(FittedModel {
        family: Family::Logistic,
        labels: design.labels.clone(),
        beta,
        cov_beta,
        sigma2: None,
        dispersion: None,
        n,
        p,
        dropped_columns: reduced.dropped,
        notes,
        log_likelihood: fit.log_likelihood,
        iterations: fit.iterations,
    })
}

/// Poisson Newton fit; when it fails to converge or ends with a singular
/// information matrix (a coefficient running off to -∞ because a covariate
/// combination only occurs among zero responses), refits with
/// [`SEPARATION_RIDGE`] and flags [`FitNote::Separation`].
pub(crate) fn poisson_with_fallback(
    x: &DMatrix<f64>,
    y: &[f64],
    offset: &[f64],
    start: DVector<f64>,
    what: &'static str,
) -> Result<(NewtonFit, Vec<FitNote>)> {
    let fit = newton_canonical(Canonical::Poisson, x, y, offset, 0.0, start.clone())?;
    if fit.converged {
        return Ok((fit, Vec::new()));
    }
    let fit = newton_canonical(Canonical::Poisson, x, y, offset, SEPARATION_RIDGE, start)?;
    if !fit.converged {
        return Err(Error::NonConvergence(what));
    }
    Ok((fit, vec![FitNote::Separation]))
}

/// Constant-hazard (exponential) survival regression, `λ = exp(wᵀθ)`, with
/// right censoring. Fitted as a Poisson regression of the event indicator
/// with offset `log(time)`; the reported log-likelihood is
/// `Σ d·log λ - λ·t`.
pub fn fit_exp_hazard(design: &DesignMatrix, time: &[f64], event: &[f64]) -> Result<FittedModel> {
    let n = design.nrows();
    if time.len() != n || event.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} times, {} events for {n} rows",
            time.len(),
            event.len()
        )));
    }
    if time.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument("exposure times must be positive".into()));
    }
    if event.iter().any(|&d| d != 0.0 && d != 1.0) {
        return Err(Error::InvalidArgument("event indicator must be 0/1".into()));
    }
    let total_events: f64 = event.iter().sum();
    if total_events == 0.0 {
        return Err(Error::ZeroEvents);
    }
    let reduced = design.reduce()?;
    let p = reduced.keep.len();
    if n <= p {
        return Err(Error::InsufficientRows { n, p });
    }
    let x = &reduced.x;
    let offset: Vec<f64> = time.iter().map(|t| t.ln()).collect();
    let exposure: f64 = time.iter().sum();
    let start = start_on_constant(x, (total_events / exposure).ln());
    let (fit, notes) = poisson_with_fallback(x, event, &offset, start, "exponential hazard regression")?;
    let cov = spd_inverse(&fit.information)?;
    let log_likelihood = fit.log_likelihood;
    let (beta, cov_beta) = reduced.expand(&fit.beta, &cov);
    Ok(FittedModel {
        family: Family::ExpHazard,
        labels: design.labels.clone(),
        beta,
        cov_beta,
        sigma2: None,
        dispersion: None,
        n,
        p,
        dropped_columns: reduced.dropped,
        notes,
        log_likelihood,
        iterations: fit.iterations,
    })
}
