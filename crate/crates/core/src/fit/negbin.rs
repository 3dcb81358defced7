use nalgebra::{DMatrix, DVector};

use super::glm::{poisson_with_fallback, start_on_constant, SEPARATION_RIDGE};
use super::{
    max_relative_change, spd_inverse, spd_solve, DesignMatrix, Family, FitNote, FittedModel,
    COEF_TOLERANCE, MAX_ITERATIONS,
};
use crate::error::{Error, Result};

/// Dispersion estimates below this are reported as a Poisson fit.
pub const POISSON_FALLBACK_DISPERSION: f64 = 1e-6;

const MAX_OUTER: usize = 4 * MAX_ITERATIONS;

fn ln_factorial(y: u64) -> f64 {
    (2..=y).map(|k| (k as f64).ln()).sum()
}

/// NB2 log-likelihood of one count and its derivatives in the dispersion `α`,
/// holding the mean `μ` fixed. Returns `(ℓ, dℓ/dα, d²ℓ/dα²)`.
pub fn negbin_dispersion_derivatives(y: u64, mu: f64, alpha: f64) -> (f64, f64, f64) {
    let yf = y as f64;
    let am = alpha * mu;
    let l1p = am.ln_1p();
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for k in 0..y {
        let k = k as f64;
        let d = 1.0 + k * alpha;
        s0 += d.ln();
        s1 += k / d;
        s2 += (k / d).powi(2);
    }
    let ll = s0 + yf * mu.ln() - yf * l1p - l1p / alpha - ln_factorial(y);
    let d1 = s1 - yf * mu / (1.0 + am) + l1p / (alpha * alpha) - mu / (alpha * (1.0 + am));
    let d2 = -s2 + yf * mu * mu / (1.0 + am).powi(2) + mu / ((1.0 + am) * alpha * alpha)
        - 2.0 * l1p / alpha.powi(3)
        + mu * (1.0 + 2.0 * am) / (alpha * alpha * (1.0 + am).powi(2));
    (ll, d1, d2)
}

fn nb_loglik(x: &DMatrix<f64>, y: &[u64], offset: &[f64], beta: &DVector<f64>, alpha: f64) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .zip(offset)
        .map(|((e, &yi), o)| negbin_dispersion_derivatives(yi, (e + o).exp(), alpha).0)
        .sum()
}

fn poisson_loglik_full(x: &DMatrix<f64>, y: &[u64], offset: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .zip(offset)
        .map(|((e, &yi), o)| {
            let lp = e + o;
            yi as f64 * lp - lp.exp() - ln_factorial(yi)
        })
        .sum()
}

fn beta_score_info(
    x: &DMatrix<f64>,
    y: &[u64],
    offset: &[f64],
    beta: &DVector<f64>,
    alpha: f64,
    observed: bool,
) -> (DVector<f64>, DMatrix<f64>) {
    let p = x.ncols();
    let eta = x * beta;
    let mut g = DVector::zeros(p);
    let mut h = DMatrix::zeros(p, p);
    for i in 0..x.nrows() {
        let mu = (eta[i] + offset[i]).exp();
        let yi = y[i] as f64;
        let denom = 1.0 + alpha * mu;
        let r = (yi - mu) / denom;
        let w = if observed {
            mu * (1.0 + alpha * yi) / (denom * denom)
        } else {
            mu / denom
        };
        let row = x.row(i);
        for a in 0..p {
            g[a] += row[a] * r;
            for b in 0..=a {
                h[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
    }
    (g, h)
}

/// Negative-binomial (NB2) regression with log link and offset.
///
/// Starts from the Poisson fit. When the Poisson residuals show no excess
/// variance (`Σ[(y-μ)² - y] <= 0`, the dispersion score at zero) or the
/// dispersion estimate falls below [`POISSON_FALLBACK_DISPERSION`], the
/// Poisson coefficients are returned with [`FitNote::PoissonFallback`].
/// Otherwise coefficients and `log α` are updated by alternating Newton steps;
/// if those fail numerically they are repeated with a small ridge on `β` and
/// [`FitNote::Separation`]. The covariance is the inverse expected
/// information `Σ x xᵀ μ/(1+αμ)`.
pub fn fit_negbin(design: &DesignMatrix, count: &[f64], offset: &[f64]) -> Result<FittedModel> {
    let n = design.nrows();
    if count.len() != n || offset.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} counts, {} offsets for {n} rows",
            count.len(),
            offset.len()
        )));
    }
    if offset.iter().any(|o| !o.is_finite()) {
        return Err(Error::NonFinite("offset".into()));
    }
    if count.iter().any(|&c| !(c >= 0.0) || c.fract() != 0.0) {
        return Err(Error::InvalidArgument("counts must be non-negative integers".into()));
    }
    if count.iter().all(|&c| c == 0.0) {
        return Err(Error::AllCountsZero);
    }
    let y: Vec<u64> = count.iter().map(|&c| c as u64).collect();
    let reduced = design.reduce()?;
    let p = reduced.keep.len();
    if n <= p {
        return Err(Error::InsufficientRows { n, p });
    }
    let x = &reduced.x;

    let exposure: f64 = offset.iter().map(|o| o.exp()).sum();
    let start = start_on_constant(x, (count.iter().sum::<f64>() / exposure).ln());
    let (pois, mut notes) = poisson_with_fallback(x, count, offset, start, "poisson regression")?;

    let eta = x * &pois.beta;
    let mus: Vec<f64> = eta.iter().zip(offset).map(|(e, o)| (e + o).exp()).collect();
    let excess: f64 = mus.iter().zip(count).map(|(m, c)| (c - m).powi(2) - c).sum();

    let mut ridge = 0.0;
    let nb = if excess > 0.0 && notes.is_empty() {
        let moment = mus
            .iter()
            .zip(count)
            .map(|(m, c)| (c - m).powi(2) - m)
            .sum::<f64>()
            / mus.iter().map(|m| m * m).sum::<f64>();
        let alpha0 = moment.max(0.05);
        match alternate(x, &y, offset, pois.beta.clone(), alpha0, 0.0) {
            Ok(fit) => fit,
            Err(e) if e.is_numeric() => {
                ridge = SEPARATION_RIDGE;
                notes.push(FitNote::Separation);
                alternate(x, &y, offset, pois.beta.clone(), alpha0, ridge)?
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let (beta_r, cov_r, alpha, ll, iterations) = match nb {
        Some((beta, alpha, it)) => {
            let (_, mut info) = beta_score_info(x, &y, offset, &beta, alpha, false);
            for a in 0..p {
                info[(a, a)] += ridge;
            }
            let cov = spd_inverse(&info)?;
            let ll = nb_loglik(x, &y, offset, &beta, alpha);
            (beta, cov, alpha, ll, it)
        }
        None => {
            notes.push(FitNote::PoissonFallback);
            let cov = spd_inverse(&pois.information)?;
            let ll = poisson_loglik_full(x, &y, offset, &pois.beta);
            (pois.beta.clone(), cov, 0.0, ll, pois.iterations)
        }
    };
    let (beta, cov_beta) = reduced.expand(&beta_r, &cov_r);
    Ok(FittedModel {
        family: Family::NegBin,
        labels: design.labels.clone(),
        beta,
        cov_beta,
        sigma2: None,
        dispersion: Some(alpha),
        n,
        p,
        dropped_columns: reduced.dropped,
        notes,
        log_likelihood: ll,
        iterations,
    })
}

/// Alternating Newton updates of `β` (observed information) and `log α`,
/// maximising the log-likelihood minus `ridge/2 · |β|²`. Returns `None` when
/// the dispersion heads to zero.
fn alternate(
    x: &DMatrix<f64>,
    y: &[u64],
    offset: &[f64],
    mut beta: DVector<f64>,
    mut alpha: f64,
    ridge: f64,
) -> Result<Option<(DVector<f64>, f64, usize)>> {
    let penalty = |b: &DVector<f64>| 0.5 * ridge * b.norm_squared();
    let mut ll = nb_loglik(x, y, offset, &beta, alpha) - penalty(&beta);
    for it in 1..=MAX_OUTER {
        // coefficient step
        let (mut g, mut h) = beta_score_info(x, y, offset, &beta, alpha, true);
        g -= &beta * ridge;
        for a in 0..h.nrows() {
            h[(a, a)] += ridge;
        }
        let step = spd_solve(&h, &g)?;
        let mut t = 1.0;
        let mut cand = &beta + &step;
        let mut value = nb_loglik(x, y, offset, &cand, alpha) - penalty(&cand);
        while !(value >= ll - 1e-12 * ll.abs()) && t > 1e-10 {
            t *= 0.5;
            cand = &beta + &step * t;
            value = nb_loglik(x, y, offset, &cand, alpha) - penalty(&cand);
        }
        let beta_step = &step * t;
        beta = cand;
        ll = value;

        // dispersion step in log α
        let eta = x * &beta;
        let (mut d1, mut d2) = (0.0, 0.0);
        for (i, &yi) in y.iter().enumerate() {
            let (_, a, b) = negbin_dispersion_derivatives(yi, (eta[i] + offset[i]).exp(), alpha);
            d1 += a;
            d2 += b;
        }
        let g_phi = alpha * d1;
        let h_phi = alpha * alpha * d2 + alpha * d1;
        let phi_step = if h_phi < 0.0 {
            -g_phi / h_phi
        } else {
            g_phi.signum() * 0.5
        };
        let mut t = 1.0;
        let mut cand_alpha = alpha * (phi_step).exp();
        let mut value = nb_loglik(x, y, offset, &beta, cand_alpha) - penalty(&beta);
        while !(value >= ll - 1e-12 * ll.abs()) && t > 1e-10 {
            t *= 0.5;
            cand_alpha = alpha * (phi_step * t).exp();
            value = nb_loglik(x, y, offset, &beta, cand_alpha) - penalty(&beta);
        }
        let alpha_change = (cand_alpha - alpha).abs() / (cand_alpha + 0.1);
        alpha = cand_alpha;
        ll = value;
        if !ll.is_finite() {
            return Err(Error::NonFinite("negative binomial log-likelihood".into()));
        }
        if alpha < POISSON_FALLBACK_DISPERSION {
            return Ok(None);
        }
        if max_relative_change(&beta_step, &beta) < COEF_TOLERANCE && alpha_change < COEF_TOLERANCE {
            return Ok(Some((beta, alpha, it)));
        }
    }
    Err(Error::NonConvergence("negative binomial regression"))
}
