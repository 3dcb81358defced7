use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::history::{build_history, DesignRecipe};
use crate::data::{Dataset, SubjectRecord, VariableKind};
use crate::error::{Error, Result};
use crate::fit::{FittedModel, ParameterDraw};
use crate::rng::{draw_bernoulli, exponential_from_uniform, RandomStream};

/// How the recurrent-event rate is scaled when generating gap times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtreRateMode {
    /// Divide the bias-corrected rate by the interval width.
    #[default]
    AsPaper,
    /// Use the bias-corrected rate as is; the model's log-exposure offset
    /// already makes it a per-unit-time rate.
    OffsetConsistent,
}

/// The interval, covariate recipe and treatment arm an imputation step
/// applies to (`group = None` means all subjects).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalTarget {
    pub j: usize,
    pub recipe: DesignRecipe,
    pub group: Option<u8>,
    /// Upper bound on an imputed recurrent-event rate.
    pub max_rate: Option<f64>,
}

impl IntervalTarget {
    fn covers(&self, s: &SubjectRecord) -> bool {
        self.group.is_none_or(|g| s.treatment == g)
    }
}

/// `exp(wᵀθ̃ - wᵀVw/2)`: the drawn rate scaled so that its expectation over
/// `θ̃ ~ N(θ̂, V)` equals `exp(wᵀθ̂)`.
pub fn bias_adjusted_rate(theta_tilde: &DVector<f64>, w: &[f64], v: &DMatrix<f64>) -> Result<f64> {
    let p = theta_tilde.len();
    if w.len() != p || v.nrows() != p || v.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "coefficients {p}, covariates {}, covariance {}x{}",
            w.len(),
            v.nrows(),
            v.ncols()
        )));
    }
    let wv = DVector::from_column_slice(w);
    let rate = (wv.dot(theta_tilde) - 0.5 * (v * &wv).dot(&wv)).exp();
    if !rate.is_finite() {
        return Err(Error::NonFinite(format!("bias-adjusted rate {rate}")));
    }
    Ok(rate)
}

fn linear_predictor(d: &Dataset, i: usize, kind: VariableKind, target: &IntervalTarget, coef: &DVector<f64>) -> Result<f64> {
    let h = build_history(d, i, target.j, kind, &target.recipe)?;
    if h.values.len() != coef.len() {
        return Err(Error::DimensionMismatch(format!("{} covariates for {} coefficients", h.values.len(), coef.len())));
    }
    Ok(DVector::from_vec(h.values).dot(coef))
}

fn check_interval(d: &Dataset, j: usize) -> Result<()> {
    let max = d.grid.n_intervals();
    if j == 0 || j > max {
        return Err(Error::IntervalOutOfRange { index: j, max });
    }
    Ok(())
}

/// Fills visit `j` of continuous variable `k` (index among longitudinal
/// variables) with `wᵀβ̃ + e`, `e ~ N(0, σ̃²)`. Returns the number imputed.
pub fn impute_continuous(
    d: &mut Dataset,
    k: usize,
    target: &IntervalTarget,
    draw: &ParameterDraw,
    stream: &mut RandomStream,
) -> Result<usize> {
    check_interval(d, target.j)?;
    let sd = draw.sigma2_tilde.unwrap_or(0.0).max(0.0).sqrt();
    let mut updates = Vec::new();
    for (i, s) in d.subjects.iter().enumerate() {
        if target.covers(s) && s.longitudinal[k][target.j].is_none() {
            let mean = linear_predictor(d, i, VariableKind::Continuous, target, &draw.beta_tilde)?;
            updates.push((i, mean + sd * stream.standard_normal()));
        }
    }
    for &(i, v) in &updates {
        d.subjects[i].longitudinal[k][target.j] = Some(v);
    }
    Ok(updates.len())
}

/// Fills visit `j` of binary variable `k` with a Bernoulli draw at
/// probability `logit⁻¹(wᵀθ̃)`.
pub fn impute_binary(
    d: &mut Dataset,
    k: usize,
    target: &IntervalTarget,
    draw: &ParameterDraw,
    stream: &mut RandomStream,
) -> Result<usize> {
    check_interval(d, target.j)?;
    let mut updates = Vec::new();
    for (i, s) in d.subjects.iter().enumerate() {
        if target.covers(s) && s.longitudinal[k][target.j].is_none() {
            let eta = linear_predictor(d, i, VariableKind::Binary, target, &draw.beta_tilde)?;
            let p = 1.0 / (1.0 + (-eta).exp());
            updates.push((i, f64::from(draw_bernoulli(stream, p)?)));
        }
    }
    for &(i, v) in &updates {
        d.subjects[i].longitudinal[k][target.j] = Some(v);
    }
    Ok(updates.len())
}

/// For subjects followed to before `t_j` with no event so far, draws an
/// exponential waiting time from `max(T_c, t_{j-1})`; an event is recorded
/// if it lands before `t_j`, otherwise the subject stays unresolved.
/// Returns the number of imputed events.
pub fn impute_tte(
    d: &mut Dataset,
    target: &IntervalTarget,
    fit: &FittedModel,
    draw: &ParameterDraw,
    stream: &mut RandomStream,
) -> Result<usize> {
    check_interval(d, target.j)?;
    let (lo, hi) = (d.grid.t(target.j - 1), d.grid.t(target.j));
    let mut updates = Vec::new();
    for (i, s) in d.subjects.iter().enumerate() {
        if !target.covers(s) || s.tte.event || s.censor_time >= hi {
            continue;
        }
        let h = build_history(d, i, target.j, VariableKind::Tte, &target.recipe)?;
        let rate = bias_adjusted_rate(&draw.beta_tilde, &h.values, &fit.cov_beta)?;
        let start = s.censor_time.max(lo);
        let z = exponential_from_uniform(stream.uniform_open0(), rate);
        if z < hi - start {
            updates.push((i, start + z));
        }
    }
    for &(i, t) in &updates {
        let s = &mut d.subjects[i];
        s.tte.time = t;
        s.tte.event = true;
    }
    Ok(updates.len())
}

/// Appends recurrent events in `(max(T_c, t_{j-1}), t_j]` for subjects
/// followed to before `t_j`, generating exponential gaps until one overruns
/// `t_j`. Returns the number of appended events.
pub fn impute_ttre(
    d: &mut Dataset,
    target: &IntervalTarget,
    fit: &FittedModel,
    draw: &ParameterDraw,
    stream: &mut RandomStream,
    mode: TtreRateMode,
) -> Result<usize> {
    check_interval(d, target.j)?;
    let (lo, hi) = (d.grid.t(target.j - 1), d.grid.t(target.j));
    let scale = match mode {
        TtreRateMode::AsPaper => 1.0 / (hi - lo),
        TtreRateMode::OffsetConsistent => 1.0,
    };
    let mut updates: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, s) in d.subjects.iter().enumerate() {
        if !target.covers(s) || s.censor_time >= hi {
            continue;
        }
        let h = build_history(d, i, target.j, VariableKind::Ttre, &target.recipe)?;
        let mut rate = scale * bias_adjusted_rate(&draw.beta_tilde, &h.values, &fit.cov_beta)?;
        if let Some(cap) = target.max_rate {
            rate = rate.min(cap);
        }
        let mut t = s.censor_time.max(lo);
        let mut new = Vec::new();
        loop {
            let z = exponential_from_uniform(stream.uniform_open0(), rate);
            if z >= hi - t {
                break;
            }
            if z > 0.0 {
                t += z;
                new.push(t);
            }
        }
        updates.push((i, new));
    }
    let mut added = 0;
    for (i, new) in updates {
        added += new.len();
        d.subjects[i].recurrent_times.extend(new);
    }
    Ok(added)
}

/// Removes everything after a terminal event: later visits, later recurrent
/// events and follow-up beyond the event time. Identity unless the
/// time-to-event variable is terminal.
pub fn truncate_after_terminal(d: &Dataset) -> Dataset {
    let mut out = d.clone();
    if !d.is_terminal() {
        return out;
    }
    let times = d.grid.times().to_vec();
    for s in &mut out.subjects {
        if !s.tte.event || s.tte.time >= s.censor_time {
            continue;
        }
        let tau = s.tte.time;
        for series in &mut s.longitudinal {
            for (v, &t) in series.iter_mut().zip(&times) {
                if t > tau {
                    *v = None;
                }
            }
        }
        s.recurrent_times.retain(|&t| t <= tau);
        s.censor_time = tau;
    }
    out
}
