//! Complete-data estimators and multiple-imputation pooling.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Right-continuous step function with jumps at `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub initial: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub variances: Vec<f64>,
}

impl StepFunction {
    fn index_at(&self, t: f64) -> Option<usize> {
        self.times.partition_point(|&s| s <= t).checked_sub(1)
    }

    /// Value after the last jump at or before `t`.
    pub fn eval(&self, t: f64) -> f64 {
        self.index_at(t).map_or(self.initial, |i| self.values[i])
    }

    pub fn variance_at(&self, t: f64) -> f64 {
        self.index_at(t).map_or(0.0, |i| self.variances[i])
    }
}

/// Product-limit survival estimate with Greenwood variance.
///
/// Subjects censored at an event time are still at risk at that time.
pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<StepFunction> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("kaplan_meier needs at least one subject".into()));
    }
    if times.len() != events.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} times, {} event flags",
            times.len(),
            events.len()
        )));
    }
    if times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument("survival times must be positive".into()));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut out = StepFunction {
        initial: 1.0,
        times: Vec::new(),
        values: Vec::new(),
        variances: Vec::new(),
    };
    let mut at_risk = times.len();
    let mut surv = 1.0;
    let mut greenwood = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut deaths = 0;
        let mut leaving = 0;
        while i < order.len() && times[order[i]] == t {
            deaths += usize::from(events[order[i]]);
            leaving += 1;
            i += 1;
        }
        if deaths > 0 {
            let (n, d) = (at_risk as f64, deaths as f64);
            surv *= 1.0 - d / n;
            let var = if deaths < at_risk {
                greenwood += d / (n * (n - d));
                surv * surv * greenwood
            } else {
                0.0
            };
            out.times.push(t);
            out.values.push(surv);
            out.variances.push(var);
        }
        at_risk -= leaving;
    }
    Ok(out)
}

/// Variance estimator for the mean cumulative function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McfVariance {
    /// Counting-process sum `Σ d(t)/n(t)²`; exact for Poisson processes.
    #[default]
    Poisson,
    /// Lawless–Nadeau sum of squared per-subject score contributions; valid
    /// under between-subject heterogeneity.
    Robust,
}

/// Nelson–Aalen estimate of the mean cumulative function of a recurrent
/// event, with the counting-process variance `Σ d(t)/n(t)²`.
///
/// A subject is at risk at `t` while `t <= censor time`.
pub fn nelson_aalen_mcf(events: &[Vec<f64>], censor: &[f64]) -> Result<StepFunction> {
    nelson_aalen_mcf_with(events, censor, McfVariance::Poisson)
}

/// [`nelson_aalen_mcf`] with a choice of variance estimator.
pub fn nelson_aalen_mcf_with(events: &[Vec<f64>], censor: &[f64], variance: McfVariance) -> Result<StepFunction> {
    if censor.is_empty() {
        return Err(Error::InvalidArgument("nelson_aalen_mcf needs at least one subject".into()));
    }
    if events.len() != censor.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} event lists, {} censor times",
            events.len(),
            censor.len()
        )));
    }
    let mut all: Vec<f64> = Vec::new();
    for (ev, &c) in events.iter().zip(censor) {
        if let Some(&t) = ev.iter().find(|&&t| t > c) {
            return Err(Error::InvalidArgument(format!("event at {t} after censoring at {c}")));
        }
        all.extend_from_slice(ev);
    }
    all.sort_by(f64::total_cmp);
    let mut sorted_censor = censor.to_vec();
    sorted_censor.sort_by(f64::total_cmp);

    let mut out = StepFunction {
        initial: 0.0,
        times: Vec::new(),
        values: Vec::new(),
        variances: Vec::new(),
    };
    let (mut mcf, mut var) = (0.0, 0.0);
    let (mut at_risk, mut jumps) = (Vec::new(), Vec::new());
    let mut i = 0;
    while i < all.len() {
        let t = all[i];
        let mut d = 0usize;
        while i < all.len() && all[i] == t {
            d += 1;
            i += 1;
        }
        let n = (sorted_censor.len() - sorted_censor.partition_point(|&c| c < t)) as f64;
        mcf += d as f64 / n;
        var += d as f64 / (n * n);
        out.times.push(t);
        out.values.push(mcf);
        out.variances.push(var);
        at_risk.push(n);
        jumps.push(d as f64);
    }
    if variance == McfVariance::Robust {
        out.variances = robust_mcf_variance(events, censor, &out.times, &at_risk, &jumps);
    }
    Ok(out)
}

/// `Σ_i ψ_i(t)²` with `ψ_i(t) = Σ_{u ≤ t, u ≤ c_i} (dN_i(u) − d(u)/n(u)) / n(u)`.
fn robust_mcf_variance(events: &[Vec<f64>], censor: &[f64], times: &[f64], n: &[f64], d: &[f64]) -> Vec<f64> {
    let mut var = vec![0.0; times.len()];
    for (ev, &c) in events.iter().zip(censor) {
        let mut own = ev.clone();
        own.sort_by(f64::total_cmp);
        let (mut psi, mut next) = (0.0, 0usize);
        for (k, &u) in times.iter().enumerate() {
            if u <= c {
                let mut mine = 0.0;
                while next < own.len() && own[next] <= u {
                    if own[next] == u {
                        mine += 1.0;
                    }
                    next += 1;
                }
                psi += (mine - d[k] / n[k]) / n[k];
            }
            var[k] += psi * psi;
        }
    }
    var
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    Mean,
    Proportion,
}

/// Sample mean with variance `s²/n`, or sample proportion with `p(1-p)/n`.
pub fn marginal_estimate(values: &[f64], kind: MarginalKind) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("marginal_estimate needs at least one value".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    match kind {
        MarginalKind::Mean => {
            let var = if values.len() > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n
            } else {
                0.0
            };
            Ok((mean, var))
        }
        MarginalKind::Proportion => {
            if values.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidArgument("proportion inputs must be 0/1".into()));
            }
            Ok((mean, mean * (1.0 - mean) / n))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DfMode {
    /// Normal quantile.
    #[default]
    Normal,
    /// Barnard–Rubin small-sample degrees of freedom; `complete_df` is the
    /// complete-data degrees of freedom (`None` = infinite).
    BarnardRubin { complete_df: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub theta_bar: f64,
    pub v_within: f64,
    pub v_between: f64,
    pub v_pooled: f64,
    pub ci: (f64, f64),
    pub m: usize,
    /// Degrees of freedom behind the interval; infinite for the normal quantile.
    pub df: f64,
    /// Only one imputation: no between-imputation variance.
    pub within_only: bool,
}

impl PooledEstimate {
    pub fn se(&self) -> f64 {
        self.v_pooled.sqrt()
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci.0 <= value && value <= self.ci.1
    }
}

/// Rubin's rules: `V = W + (1 + 1/m) B` with a 95% interval.
pub fn rubin_pool(estimates: &[f64], variances: &[f64], df_mode: DfMode) -> Result<PooledEstimate> {
    let m = estimates.len();
    if m != variances.len() {
        return Err(Error::DimensionMismatch(format!("{m} estimates, {} variances", variances.len())));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("rubin_pool needs at least one estimate".into()));
    }
    let mf = m as f64;
    let theta_bar = estimates.iter().sum::<f64>() / mf;
    let v_within = variances.iter().sum::<f64>() / mf;
    let v_between = if m > 1 {
        estimates.iter().map(|e| (e - theta_bar).powi(2)).sum::<f64>() / (mf - 1.0)
    } else {
        0.0
    };
    let v_pooled = v_within + (1.0 + 1.0 / mf) * v_between;

    let df = match df_mode {
        DfMode::Normal => f64::INFINITY,
        DfMode::BarnardRubin { complete_df } => barnard_rubin_df(m, v_between, v_pooled, complete_df),
    };
    let q = if df.is_finite() {
        StudentsT::new(0.0, 1.0, df)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .inverse_cdf(0.975)
    } else {
        Normal::standard().inverse_cdf(0.975)
    };
    let half = q * v_pooled.sqrt();
    Ok(PooledEstimate {
        theta_bar,
        v_within,
        v_between,
        v_pooled,
        ci: (theta_bar - half, theta_bar + half),
        m,
        df,
        within_only: m == 1,
    })
}

fn barnard_rubin_df(m: usize, between: f64, total: f64, complete_df: Option<f64>) -> f64 {
    if m < 2 || !(total > 0.0) {
        return complete_df.unwrap_or(f64::INFINITY);
    }
    let lambda = (1.0 + 1.0 / m as f64) * between / total;
    let old = if lambda > 0.0 {
        (m as f64 - 1.0) / (lambda * lambda)
    } else {
        f64::INFINITY
    };
    match complete_df {
        None => old,
        Some(com) => {
            let obs = (com + 1.0) / (com + 3.0) * com * (1.0 - lambda);
            if old.is_infinite() {
                obs
            } else {
                old * obs / (old + obs)
            }
        }
    }
}
