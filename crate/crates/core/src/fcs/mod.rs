//! Sequential interval-by-interval imputation of monotone-missing trial data.
//!
//! For each interval `j = 1..J` a conditional model is fitted per variable
//! on subjects observed through the interval: normal linear and logistic
//! models for longitudinal values at `t_j`, a constant-hazard model for the
//! time-to-event outcome and a negative-binomial count model for recurrent
//! events. Each model conditions on the subject's history through
//! `t_{j-1}`. One parameter draw per model is then used to impute every
//! subject whose follow-up ended before `t_j`.
//!
//! Every fitting sample consists of subjects whose history is fully
//! observed, so the fits depend on the observed data only. They are computed
//! once ([`FitPlan`]) and shared by all imputations; only the draws differ.

mod history;
mod impute;

pub use history::{build_history, DesignRecipe, Dependency, HistoryMode, HistoryVector};
pub use impute::{
    bias_adjusted_rate, impute_binary, impute_continuous, impute_tte, impute_ttre, truncate_after_terminal,
    IntervalTarget, TtreRateMode,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{validate_dataset, Dataset, VariableKind};
use crate::error::{Error, Result};
use crate::fit::{
    draw_glm_params, draw_linear_params, fit_exp_hazard, fit_linear, fit_logistic, fit_negbin, DesignMatrix, Family,
    FittedModel,
};
use crate::rng::StreamKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputationConfig {
    /// Number of imputed datasets.
    pub m: usize,
    /// Fit and impute each treatment arm separately.
    pub by_group: bool,
    pub history_mode: HistoryMode,
    pub dependency: Dependency,
    pub ttre_rate_mode: TtreRateMode,
    pub rate_bound: RateBound,
    pub master_seed: u64,
}

/// Optional limit on imputed recurrent-event rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateBound {
    #[default]
    Unbounded,
    /// Cap each imputed rate at the largest count observed in the
    /// interval's fitting sample divided by the interval length.
    ObservedMax,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self {
            m: 20,
            by_group: false,
            history_mode: HistoryMode::Full,
            dependency: Dependency::Full,
            ttre_rate_mode: TtreRateMode::AsPaper,
            rate_bound: RateBound::Unbounded,
            master_seed: 0,
        }
    }
}

impl ImputationConfig {
    fn recipe(&self, mode: HistoryMode) -> DesignRecipe {
        DesignRecipe {
            mode,
            dependency: self.dependency,
            include_treatment: !self.by_group,
        }
    }

    fn groups(&self) -> Vec<Option<u8>> {
        if self.by_group {
            vec![Some(0), Some(1)]
        } else {
            vec![None]
        }
    }
}

/// A fitted conditional model for one (interval, variable, arm).
#[derive(Debug, Clone)]
pub struct IntervalModel {
    pub interval: usize,
    /// Index into the dataset schema.
    pub variable: usize,
    pub group: Option<u8>,
    /// The recipe actually used, after any fallback to composite history.
    pub recipe: DesignRecipe,
    pub fit: FittedModel,
    /// Largest count in the fitting sample per unit time over the
    /// interval (recurrent events only).
    pub observed_max_rate: Option<f64>,
}

/// Fits for every (interval, variable, arm) that has something to impute.
#[derive(Debug, Clone, Default)]
pub struct FitPlan {
    pub models: Vec<IntervalModel>,
}

impl FitPlan {
    pub fn get(&self, interval: usize, variable: usize, group: Option<u8>) -> Option<&IntervalModel> {
        self.models
            .iter()
            .find(|m| m.interval == interval && m.variable == variable && m.group == group)
    }
}

/// Variables in processing order within an interval: time-to-event,
/// recurrent events, then longitudinal variables in schema order. Each entry
/// is `(schema index, kind, longitudinal index)`.
fn processing_order(d: &Dataset) -> Vec<(usize, VariableKind, usize)> {
    let mut order = Vec::new();
    for kind in [VariableKind::Tte, VariableKind::Ttre] {
        if let Some(i) = d.schema.iter().position(|v| v.kind == kind) {
            order.push((i, kind, usize::MAX));
        }
    }
    let mut k = 0;
    for (i, v) in d.schema.iter().enumerate() {
        if v.kind.is_longitudinal() {
            order.push((i, v.kind, k));
            k += 1;
        }
    }
    order
}

struct Sample {
    rows: Vec<usize>,
    response: Vec<f64>,
    /// Exposure for the hazard model, log-exposure offset for counts.
    extra: Vec<f64>,
}

fn fitting_sample(d: &Dataset, j: usize, kind: VariableKind, k: usize, group: Option<u8>) -> Sample {
    let (lo, hi) = (d.grid.t(j - 1), d.grid.t(j));
    let mut sample = Sample {
        rows: Vec::new(),
        response: Vec::new(),
        extra: Vec::new(),
    };
    for (i, s) in d.subjects.iter().enumerate() {
        if group.is_some_and(|g| s.treatment != g) {
            continue;
        }
        match kind {
            VariableKind::Continuous | VariableKind::Binary => {
                if let (true, Some(v)) = (s.censor_time >= hi, s.longitudinal[k][j]) {
                    sample.rows.push(i);
                    sample.response.push(v);
                }
            }
            VariableKind::Tte => {
                if s.tte.time > lo {
                    sample.rows.push(i);
                    sample.response.push(f64::from(u8::from(s.tte.event && s.tte.time <= hi)));
                    sample.extra.push(s.tte.time.min(hi) - lo);
                }
            }
            VariableKind::Ttre => {
                if s.censor_time > lo {
                    let end = s.censor_time.min(hi);
                    let count = s.recurrent_times.iter().filter(|&&t| t > lo && t <= end).count();
                    sample.rows.push(i);
                    sample.response.push(count as f64);
                    sample.extra.push((end - lo).ln());
                }
            }
        }
    }
    sample
}

fn needs_imputation(d: &Dataset, j: usize, kind: VariableKind, group: Option<u8>) -> bool {
    let hi = d.grid.t(j);
    d.subjects.iter().any(|s| {
        group.is_none_or(|g| s.treatment == g) && s.censor_time < hi && !(kind == VariableKind::Tte && s.tte.event)
    })
}

fn design_for(d: &Dataset, rows: &[usize], j: usize, kind: VariableKind, recipe: &DesignRecipe) -> Result<DesignMatrix> {
    let mut values = Vec::with_capacity(rows.len());
    let mut labels = None;
    for &i in rows {
        let h = build_history(d, i, j, kind, recipe)?;
        labels.get_or_insert(h.labels);
        values.push(h.values);
    }
    let labels = labels.ok_or(Error::InsufficientRows { n: 0, p: 0 })?;
    DesignMatrix::from_rows(&values, labels)
}

fn fit_slot(
    d: &Dataset,
    cfg: &ImputationConfig,
    j: usize,
    (variable, kind, k): (usize, VariableKind, usize),
    group: Option<u8>,
) -> Result<Option<IntervalModel>> {
    if !needs_imputation(d, j, kind, group) {
        return Ok(None);
    }
    let sample = fitting_sample(d, j, kind, k, group);
    let mut recipe = cfg.recipe(cfg.history_mode);
    let mut design = design_for(d, &sample.rows, j, kind, &recipe)?;
    if design.nrows() <= design.ncols() + 2 && recipe.mode == HistoryMode::Full {
        recipe = cfg.recipe(HistoryMode::Composite);
        design = design_for(d, &sample.rows, j, kind, &recipe)?;
    }
    let fit = match kind {
        VariableKind::Continuous => fit_linear(&design, &sample.response)?,
        VariableKind::Binary => fit_logistic(&design, &sample.response)?,
        VariableKind::Tte => fit_exp_hazard(&design, &sample.extra, &sample.response)?,
        VariableKind::Ttre => fit_negbin(&design, &sample.response, &sample.extra)?,
    };
    let observed_max_rate = (kind == VariableKind::Ttre).then(|| {
        let max_count = sample.response.iter().copied().fold(1.0, f64::max);
        max_count / (d.grid.t(j) - d.grid.t(j - 1))
    });
    Ok(Some(IntervalModel {
        interval: j,
        variable,
        group,
        recipe,
        fit,
        observed_max_rate,
    }))
}

fn with_context(d: &Dataset, j: usize, variable: usize, e: Error) -> Error {
    Error::Fit {
        interval: j,
        variable: d.schema[variable].name.clone(),
        source: Box::new(e),
    }
}

/// Fits every conditional model needed to impute `d`.
pub fn fit_interval_models(d: &Dataset, cfg: &ImputationConfig) -> Result<FitPlan> {
    let order = processing_order(d);
    let mut slots = Vec::new();
    for j in 1..=d.grid.n_intervals() {
        for &var in &order {
            for group in cfg.groups() {
                slots.push((j, var, group));
            }
        }
    }
    let fitted: Vec<Result<Option<IntervalModel>>> = slots
        .par_iter()
        .map(|&(j, var, group)| fit_slot(d, cfg, j, var, group).map_err(|e| with_context(d, j, var.0, e)))
        .collect();
    let mut plan = FitPlan::default();
    for f in fitted {
        if let Some(m) = f? {
            plan.models.push(m);
        }
    }
    Ok(plan)
}

fn check_input(d: &Dataset) -> Result<()> {
    let report = validate_dataset(d);
    if report.is_valid() {
        Ok(())
    } else {
        Err(Error::Validation(report.violations))
    }
}

/// Imputation number `index` (1-based) of `d` using precomputed fits.
pub fn impute_with_plan(d: &Dataset, plan: &FitPlan, cfg: &ImputationConfig, index: usize) -> Result<Dataset> {
    let mut w = d.clone();
    let order = processing_order(d);
    let key = StreamKey::new(cfg.master_seed).child("imputation", index as u64);
    for j in 1..=d.grid.n_intervals() {
        let t_j = d.grid.t(j);
        for &(variable, kind, k) in &order {
            for group in cfg.groups() {
                let Some(model) = plan.get(j, variable, group) else {
                    continue;
                };
                let mut slot_key = key.child("interval", j as u64).child("variable", variable as u64);
                if let Some(g) = group {
                    slot_key = slot_key.child("group", u64::from(g));
                }
                let mut stream = slot_key.stream();
                let target = IntervalTarget {
                    j,
                    recipe: model.recipe,
                    group,
                    max_rate: match cfg.rate_bound {
                        RateBound::Unbounded => None,
                        RateBound::ObservedMax => model.observed_max_rate,
                    },
                };
                let mut step = || -> Result<usize> {
                    let draw = match model.fit.family {
                        Family::Linear => draw_linear_params(&model.fit, &mut stream)?,
                        _ => draw_glm_params(&model.fit, &mut stream)?,
                    };
                    match kind {
                        VariableKind::Continuous => impute_continuous(&mut w, k, &target, &draw, &mut stream),
                        VariableKind::Binary => impute_binary(&mut w, k, &target, &draw, &mut stream),
                        VariableKind::Tte => impute_tte(&mut w, &target, &model.fit, &draw, &mut stream),
                        VariableKind::Ttre => {
                            impute_ttre(&mut w, &target, &model.fit, &draw, &mut stream, cfg.ttre_rate_mode)
                        }
                    }
                };
                step().map_err(|e| with_context(d, j, variable, e))?;
            }
        }
        for s in &mut w.subjects {
            if s.censor_time < t_j {
                s.censor_time = t_j;
                if !s.tte.event {
                    s.tte.time = t_j;
                }
            }
        }
    }
    Ok(truncate_after_terminal(&w))
}

/// One completed dataset; `index` selects the random stream (1-based).
pub fn run_single_imputation(d: &Dataset, cfg: &ImputationConfig, index: usize) -> Result<Dataset> {
    check_input(d)?;
    let plan = fit_interval_models(d, cfg)?;
    impute_with_plan(d, &plan, cfg, index)
}

/// `cfg.m` completed datasets, imputation `i` drawn from stream `i`
/// (`1..=m`). The result does not depend on the number of worker threads.
pub fn run_multiple_imputation(d: &Dataset, cfg: &ImputationConfig) -> Result<Vec<Dataset>> {
    if cfg.m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    check_input(d)?;
    let plan = fit_interval_models(d, cfg)?;
    (1..=cfg.m)
        .into_par_iter()
        .map(|i| impute_with_plan(d, &plan, cfg, i))
        .collect()
}
