//! Simulation studies: repeated simulate / censor / impute / pool cycles
//! scored against a large-sample reference.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, VariableKind};
use crate::error::{Error, Result};
use crate::estimators::{
    kaplan_meier, marginal_estimate, nelson_aalen_mcf, nelson_aalen_mcf_with, rubin_pool, DfMode, MarginalKind,
    McfVariance, PooledEstimate,
};
use crate::fcs::{run_multiple_imputation, Dependency, HistoryMode, ImputationConfig};
use crate::rng::StreamKey;
use crate::sim::{simulate_subject, simulate_trial, SimulatedSubject, SimulationConfig};

pub const DEFAULT_REFERENCE_N: usize = 1_000_000;
const CURVE_STEP: f64 = 0.25;
const REFERENCE_CHUNK: usize = 10_000;

/// A scalar target evaluated per treatment arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Estimand {
    Survival { time: f64 },
    Mcf { time: f64 },
    Mean { variable: String, time: f64 },
    Proportion { variable: String, time: f64 },
}

impl Estimand {
    pub fn time(&self) -> f64 {
        match self {
            Estimand::Survival { time }
            | Estimand::Mcf { time }
            | Estimand::Mean { time, .. }
            | Estimand::Proportion { time, .. } => *time,
        }
    }

    /// The four arm-level targets at `time` for the simulated schema.
    pub fn standard_set(time: f64) -> Vec<Estimand> {
        vec![
            Estimand::Survival { time },
            Estimand::Mcf { time },
            Estimand::Mean { variable: "y3".into(), time },
            Estimand::Proportion { variable: "y4".into(), time },
        ]
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimand::Survival { time } => write!(f, "survival@{time}"),
            Estimand::Mcf { time } => write!(f, "mcf@{time}"),
            Estimand::Mean { variable, time } => write!(f, "mean:{variable}@{time}"),
            Estimand::Proportion { variable, time } => write!(f, "proportion:{variable}@{time}"),
        }
    }
}

impl std::str::FromStr for Estimand {
    type Err = Error;

    /// Parses the [`Display`](fmt::Display) form, e.g. `survival@12` or
    /// `mean:y3@12`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse estimand `{s}`"));
        let (head, time) = s.rsplit_once('@').ok_or_else(bad)?;
        let time: f64 = time.trim().parse().map_err(|_| bad())?;
        let (kind, variable) = match head.split_once(':') {
            Some((k, v)) => (k, Some(v.to_owned())),
            None => (head, None),
        };
        match (kind, variable) {
            ("survival", None) => Ok(Estimand::Survival { time }),
            ("mcf", None) => Ok(Estimand::Mcf { time }),
            ("mean", Some(variable)) => Ok(Estimand::Mean { variable, time }),
            ("proportion", Some(variable)) => Ok(Estimand::Proportion { variable, time }),
            _ => Err(bad()),
        }
    }
}

/// An imputation variant compared within one study. Fields left out take
/// the values of the study's base [`ImputationConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_mode: Option<HistoryMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dependency: Option<Dependency>,
}

impl Method {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            history_mode: None,
            dependency: None,
        }
    }

    /// Full history for every model.
    pub fn full() -> Self {
        Self {
            dependency: Some(Dependency::Full),
            ..Self::named("full")
        }
    }

    /// Event models without longitudinal history and vice versa.
    pub fn reduced() -> Self {
        Self {
            dependency: Some(Dependency::Separated),
            ..Self::named("reduced")
        }
    }

    fn apply(&self, base: &ImputationConfig) -> ImputationConfig {
        let mut cfg = base.clone();
        if let Some(h) = self.history_mode {
            cfg.history_mode = h;
        }
        if let Some(d) = self.dependency {
            cfg.dependency = d;
        }
        cfg
    }
}

/// Rows labelled with these names are not imputation methods.
pub const GOLD: &str = "no_censoring";
pub const NAIVE: &str = "naive";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub replicates: usize,
    pub simulation: SimulationConfig,
    pub imputation: ImputationConfig,
    pub methods: Vec<Method>,
    pub estimands: Vec<Estimand>,
    pub df_mode: DfMode,
    pub mcf_variance: McfVariance,
    pub master_seed: u64,
    /// Subjects in the uncensored reference sample that defines the truth.
    pub reference_n: usize,
    pub reference_seed: u64,
    /// JSON file holding previously computed reference values.
    pub reference_cache: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let simulation = SimulationConfig::default();
        let estimands = Estimand::standard_set(simulation.grid.t_max());
        Self {
            replicates: 200,
            simulation,
            imputation: ImputationConfig::default(),
            methods: vec![Method::full()],
            estimands,
            df_mode: DfMode::Normal,
            mcf_variance: McfVariance::Robust,
            master_seed: 0,
            reference_n: DEFAULT_REFERENCE_N,
            reference_seed: 1,
            reference_cache: None,
            output_dir: None,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.simulation.validate()?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.imputation.m == 0 {
            return bad("m must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one imputation method is required".into());
        }
        if self.reference_n == 0 {
            return bad("reference_n must be at least 1".into());
        }
        let mut names: Vec<&str> = vec![GOLD, NAIVE];
        for m in &self.methods {
            if m.name.is_empty() || m.name.contains(',') || names.contains(&m.name.as_str()) {
                return bad(format!("method name `{}` is empty, reserved or repeated", m.name));
            }
            names.push(&m.name);
        }
        if self.estimands.is_empty() {
            return bad("at least one estimand is required".into());
        }
        let schema = SimulationConfig::schema();
        for e in &self.estimands {
            let t = e.time();
            match e {
                Estimand::Survival { .. } | Estimand::Mcf { .. } => {
                    if !(t > 0.0 && t <= self.simulation.grid.t_max()) {
                        return bad(format!("{e}: time must lie in (0, t_max]"));
                    }
                }
                Estimand::Mean { variable, .. } | Estimand::Proportion { variable, .. } => {
                    let want = if matches!(e, Estimand::Mean { .. }) {
                        VariableKind::Continuous
                    } else {
                        VariableKind::Binary
                    };
                    if !schema.iter().any(|v| &v.name == variable && v.kind == want) {
                        return bad(format!("{e}: no {want:?} variable `{variable}`"));
                    }
                    if self.simulation.grid.visit_index(t).is_none() {
                        return bad(format!("{e}: time is not a visit time"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One pooled (or single-dataset) estimate from one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub estimand: String,
    pub group: u8,
    pub method: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub covered: bool,
}

/// Across-replicate statistics for one estimand, arm and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimand: String,
    pub group: u8,
    pub method: String,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub mean_se: f64,
    pub coverage: f64,
    pub bias: f64,
    pub replicates: usize,
}

/// Mean curve across replicates (per-replicate MI curves are averaged over
/// imputations first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub method: String,
    pub group: u8,
    pub curve: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub rows: Vec<SummaryRow>,
}

impl StudySummary {
    pub fn get(&self, estimand: &str, group: u8, method: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.estimand == estimand && r.group == group && r.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub summary: StudySummary,
    pub records: Vec<ReplicateRecord>,
    pub curves: Vec<Curve>,
    /// `truth[e][g]` for estimand `e` and arm `g`.
    pub truth: Vec<[f64; 2]>,
}

// ---------------------------------------------------------------------------
// Reference values

/// Per-arm sums over a block of uncensored subjects, one slot per estimand.
#[derive(Clone)]
struct RefSums {
    sums: Vec<[f64; 2]>,
    counts: [f64; 2],
}

fn subject_value(sim: &SimulatedSubject, e: &Estimand, cfg: &SimulationConfig) -> f64 {
    match e {
        Estimand::Survival { time } => f64::from(u8::from(sim.t1 > *time)),
        Estimand::Mcf { time } => sim.recurrent.iter().filter(|&&t| t <= *time).count() as f64,
        Estimand::Mean { variable, time } | Estimand::Proportion { variable, time } => {
            let j = cfg.grid.visit_index(*time).expect("validated visit time");
            if variable == "y3" {
                sim.y3[j]
            } else {
                sim.y4[j]
            }
        }
    }
}

fn reference_key(cfg: &StudyConfig) -> Result<String> {
    let mut sim = cfg.simulation.clone();
    // Truth depends on the uncensored process only.
    sim.n = 0;
    sim.censoring = SimulationConfig::default().censoring;
    Ok(serde_json::to_string(&(sim, cfg.reference_n, cfg.reference_seed, &cfg.estimands))?)
}

fn reference_memo() -> &'static Mutex<HashMap<String, Vec<[f64; 2]>>> {
    static MEMO: OnceLock<Mutex<HashMap<String, Vec<[f64; 2]>>>> = OnceLock::new();
    MEMO.get_or_init(Default::default)
}

fn compute_reference(cfg: &StudyConfig) -> Vec<[f64; 2]> {
    let sim = &cfg.simulation;
    let key = StreamKey::new(cfg.reference_seed).child("reference", 0);
    let n = cfg.reference_n;
    let chunks: Vec<RefSums> = (0..n.div_ceil(REFERENCE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = RefSums {
                sums: vec![[0.0; 2]; cfg.estimands.len()],
                counts: [0.0; 2],
            };
            for i in c * REFERENCE_CHUNK..((c + 1) * REFERENCE_CHUNK).min(n) {
                let s = simulate_subject(sim, &key, i);
                let g = usize::from(s.effects.a);
                acc.counts[g] += 1.0;
                for (slot, e) in acc.sums.iter_mut().zip(&cfg.estimands) {
                    slot[g] += subject_value(&s, e, sim);
                }
            }
            acc
        })
        .collect();
    let mut total = RefSums {
        sums: vec![[0.0; 2]; cfg.estimands.len()],
        counts: [0.0; 2],
    };
    for c in &chunks {
        for g in 0..2 {
            total.counts[g] += c.counts[g];
            for (t, s) in total.sums.iter_mut().zip(&c.sums) {
                t[g] += s[g];
            }
        }
    }
    total
        .sums
        .iter()
        .map(|s| [s[0] / total.counts[0], s[1] / total.counts[1]])
        .collect()
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    truth: Vec<[f64; 2]>,
}

/// Per-arm truth for every estimand, from `reference_n` uncensored subjects.
/// Results are memoised in-process and, when `reference_cache` is set, on
/// disk.
pub fn reference_values(cfg: &StudyConfig) -> Result<Vec<[f64; 2]>> {
    let key = reference_key(cfg)?;
    if let Some(v) = reference_memo().lock().expect("memo lock").get(&key) {
        return Ok(v.clone());
    }
    let mut file_entries: Vec<CacheEntry> = Vec::new();
    if let Some(path) = &cfg.reference_cache {
        if path.exists() {
            file_entries = serde_json::from_str(&fs::read_to_string(path)?)?;
            if let Some(e) = file_entries.iter().find(|e| e.key == key) {
                reference_memo().lock().expect("memo lock").insert(key, e.truth.clone());
                return Ok(e.truth.clone());
            }
        }
    }
    let truth = compute_reference(cfg);
    if truth.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reference sample has an empty arm".into()));
    }
    if let Some(path) = &cfg.reference_cache {
        file_entries.push(CacheEntry {
            key: key.clone(),
            truth: truth.clone(),
        });
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_string_pretty(&file_entries)?)?;
    }
    reference_memo().lock().expect("memo lock").insert(key, truth.clone());
    Ok(truth)
}

// ---------------------------------------------------------------------------
// Estimation on one dataset

/// Point estimate and variance of `e` in arm `group`. Longitudinal targets
/// use the subjects observed at that visit.
pub fn estimate(d: &Dataset, e: &Estimand, group: u8, mcf_variance: McfVariance) -> Result<(f64, f64)> {
    let arm: Vec<_> = d.subjects.iter().filter(|s| s.treatment == group).collect();
    if arm.is_empty() {
        return Err(Error::InvalidArgument(format!("arm {group} has no subjects")));
    }
    match e {
        Estimand::Survival { time } => {
            let times: Vec<f64> = arm.iter().map(|s| s.tte.time).collect();
            let events: Vec<bool> = arm.iter().map(|s| s.tte.event).collect();
            let km = kaplan_meier(&times, &events)?;
            Ok((km.eval(*time), km.variance_at(*time)))
        }
        Estimand::Mcf { time } => {
            let events: Vec<Vec<f64>> = arm.iter().map(|s| s.recurrent_times.clone()).collect();
            let censor: Vec<f64> = arm.iter().map(|s| s.censor_time).collect();
            let mcf = nelson_aalen_mcf_with(&events, &censor, mcf_variance)?;
            Ok((mcf.eval(*time), mcf.variance_at(*time)))
        }
        Estimand::Mean { variable, time } | Estimand::Proportion { variable, time } => {
            let k = longitudinal_index(d, variable)?;
            let j = d
                .grid
                .visit_index(*time)
                .ok_or_else(|| Error::InvalidArgument(format!("{e}: not a visit time")))?;
            let values: Vec<f64> = arm.iter().filter_map(|s| s.longitudinal[k][j]).collect();
            let kind = if matches!(e, Estimand::Mean { .. }) {
                MarginalKind::Mean
            } else {
                MarginalKind::Proportion
            };
            marginal_estimate(&values, kind)
        }
    }
}

fn longitudinal_index(d: &Dataset, name: &str) -> Result<usize> {
    d.longitudinal_specs()
        .iter()
        .position(|v| v.name == name)
        .ok_or_else(|| Error::InvalidArgument(format!("no longitudinal variable `{name}`")))
}

/// Curve name and evaluation times for the plotting output.
fn curve_layout(d: &Dataset) -> Vec<(String, Vec<f64>)> {
    let t_max = d.grid.t_max();
    let steps = (t_max / CURVE_STEP).round() as usize;
    let fine: Vec<f64> = (0..=steps).map(|i| (i as f64 * CURVE_STEP).min(t_max)).collect();
    let mut out = vec![("survival".to_string(), fine.clone()), ("mcf".to_string(), fine)];
    for v in d.longitudinal_specs() {
        let label = match v.kind {
            VariableKind::Binary => format!("proportion:{}", v.name),
            _ => format!("mean:{}", v.name),
        };
        out.push((label, d.grid.times().to_vec()));
    }
    out
}

/// Curve values for one arm, in the order of [`curve_layout`].
fn curves_for(d: &Dataset, group: u8) -> Result<Vec<Vec<f64>>> {
    let arm: Vec<_> = d.subjects.iter().filter(|s| s.treatment == group).collect();
    let layout = curve_layout(d);
    let times: Vec<f64> = arm.iter().map(|s| s.tte.time).collect();
    let events: Vec<bool> = arm.iter().map(|s| s.tte.event).collect();
    let km = kaplan_meier(&times, &events)?;
    let rec: Vec<Vec<f64>> = arm.iter().map(|s| s.recurrent_times.clone()).collect();
    let censor: Vec<f64> = arm.iter().map(|s| s.censor_time).collect();
    let mcf = nelson_aalen_mcf(&rec, &censor)?;
    let mut out = vec![
        layout[0].1.iter().map(|&t| km.eval(t)).collect(),
        layout[1].1.iter().map(|&t| mcf.eval(t)).collect(),
    ];
    for k in 0..d.n_longitudinal() {
        let series = (0..d.grid.n_visits())
            .map(|j| {
                let v: Vec<f64> = arm.iter().filter_map(|s| s.longitudinal[k][j]).collect();
                if v.is_empty() {
                    f64::NAN
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            })
            .collect();
        out.push(series);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Replicates

struct ReplicateOutcome {
    records: Vec<ReplicateRecord>,
    /// `curves[method][group][curve][time]`, methods ordered gold, naive,
    /// then the configured methods.
    curves: Vec<[Vec<Vec<f64>>; 2]>,
}

fn single(
    d: &Dataset,
    cfg: &StudyConfig,
    truth: &[[f64; 2]],
    replicate: usize,
    method: &str,
) -> Result<(Vec<ReplicateRecord>, [Vec<Vec<f64>>; 2])> {
    let mut records = Vec::new();
    for (e, t) in cfg.estimands.iter().zip(truth) {
        for g in 0..2u8 {
            let (est, var) = estimate(d, e, g, cfg.mcf_variance)?;
            let p = rubin_pool(&[est], &[var], cfg.df_mode)?;
            records.push(record(replicate, e, g, method, &p, t[usize::from(g)]));
        }
    }
    Ok((records, [curves_for(d, 0)?, curves_for(d, 1)?]))
}

fn record(
    replicate: usize,
    e: &Estimand,
    group: u8,
    method: &str,
    p: &PooledEstimate,
    truth: f64,
) -> ReplicateRecord {
    ReplicateRecord {
        replicate,
        estimand: e.to_string(),
        group,
        method: method.to_owned(),
        estimate: p.theta_bar,
        se: p.se(),
        ci_lower: p.ci.0,
        ci_upper: p.ci.1,
        covered: p.covers(truth),
    }
}

fn mean_curves(sets: &[[Vec<Vec<f64>>; 2]]) -> [Vec<Vec<f64>>; 2] {
    let n = sets.len() as f64;
    let mut acc = sets[0].clone();
    for s in &sets[1..] {
        for g in 0..2 {
            for (a, b) in acc[g].iter_mut().zip(&s[g]) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
        }
    }
    for g in &mut acc {
        for c in g.iter_mut() {
            for x in c.iter_mut() {
                *x /= n;
            }
        }
    }
    acc
}

fn run_replicate(cfg: &StudyConfig, truth: &[[f64; 2]], r: usize) -> Result<ReplicateOutcome> {
    let key = StreamKey::new(cfg.master_seed).child("replicate", r as u64);
    let (full, censored) = simulate_trial(&cfg.simulation, &key.child("data", 0))?;

    let (mut records, gold_curves) = single(&full, cfg, truth, r, GOLD)?;
    let (naive, naive_curves) = single(&censored, cfg, truth, r, NAIVE)?;
    records.extend(naive);
    let mut curves = vec![gold_curves, naive_curves];

    for (mi, method) in cfg.methods.iter().enumerate() {
        let mut icfg = method.apply(&cfg.imputation);
        icfg.master_seed = key.child("method", mi as u64).stream().next_u64();
        let imputed = run_multiple_imputation(&censored, &icfg)?;
        for (e, t) in cfg.estimands.iter().zip(truth) {
            for g in 0..2u8 {
                let (ests, vars): (Vec<f64>, Vec<f64>) =
                    imputed.iter().map(|d| estimate(d, e, g, cfg.mcf_variance)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
                let p = rubin_pool(&ests, &vars, cfg.df_mode)?;
                records.push(record(r, e, g, &method.name, &p, t[usize::from(g)]));
            }
        }
        let per_imp = imputed
            .iter()
            .map(|d| Ok([curves_for(d, 0)?, curves_for(d, 1)?]))
            .collect::<Result<Vec<_>>>()?;
        curves.push(mean_curves(&per_imp));
    }
    Ok(ReplicateOutcome { records, curves })
}

fn method_names(cfg: &StudyConfig) -> Vec<String> {
    let mut names = vec![GOLD.to_string(), NAIVE.to_string()];
    names.extend(cfg.methods.iter().map(|m| m.name.clone()));
    names
}

fn summarise(cfg: &StudyConfig, truth: &[[f64; 2]], records: &[ReplicateRecord]) -> StudySummary {
    let mut groups: HashMap<(&str, u8, &str), Vec<&ReplicateRecord>> = HashMap::new();
    for rec in records {
        groups
            .entry((rec.estimand.as_str(), rec.group, rec.method.as_str()))
            .or_default()
            .push(rec);
    }
    let mut rows = Vec::new();
    for (e, t) in cfg.estimands.iter().zip(truth) {
        let label = e.to_string();
        for g in 0..2u8 {
            for method in method_names(cfg) {
                let recs = &groups[&(label.as_str(), g, method.as_str())];
                let n = recs.len() as f64;
                let mean = recs.iter().map(|r| r.estimate).sum::<f64>() / n;
                let sd = if recs.len() > 1 {
                    (recs.iter().map(|r| (r.estimate - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                let truth = t[usize::from(g)];
                rows.push(SummaryRow {
                    estimand: label.clone(),
                    group: g,
                    method: method.clone(),
                    truth,
                    mean,
                    sd,
                    mean_se: recs.iter().map(|r| r.se).sum::<f64>() / n,
                    coverage: recs.iter().filter(|r| r.covered).count() as f64 / n,
                    bias: mean - truth,
                    replicates: recs.len(),
                });
            }
        }
    }
    StudySummary { rows }
}

/// Runs every replicate, aggregates, and writes the CSV outputs when
/// `output_dir` is set. Output does not depend on the worker count.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    let truth = reference_values(cfg)?;
    let outcomes: Vec<ReplicateOutcome> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            run_replicate(cfg, &truth, r).map_err(|e| Error::Replicate {
                replicate: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let records: Vec<ReplicateRecord> = outcomes.iter().flat_map(|o| o.records.iter().cloned()).collect();
    let summary = summarise(cfg, &truth, &records);

    let layout = curve_layout(&Dataset::new(SimulationConfig::schema(), cfg.simulation.grid.clone(), Vec::new()));
    let mut curves = Vec::new();
    for (mi, method) in method_names(cfg).into_iter().enumerate() {
        let sets: Vec<[Vec<Vec<f64>>; 2]> = outcomes.iter().map(|o| o.curves[mi].clone()).collect();
        let mean = mean_curves(&sets);
        for g in 0..2u8 {
            for (c, (name, times)) in layout.iter().enumerate() {
                curves.push(Curve {
                    method: method.clone(),
                    group: g,
                    curve: name.clone(),
                    times: times.clone(),
                    values: mean[usize::from(g)][c].clone(),
                });
            }
        }
    }

    let out = StudyOutput {
        summary,
        records,
        curves,
        truth,
    };
    if let Some(dir) = &cfg.output_dir {
        write_study_outputs(cfg, &out, dir)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Output files

pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPLICATES_FILE: &str = "replicates.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const CONFIG_FILE: &str = "study_config.json";

/// `summary.csv`, `replicates.csv`, `curves.csv`, the resolved config and,
/// with two or more methods, `comparison.csv` of absolute biases.
pub fn write_study_outputs(cfg: &StudyConfig, out: &StudyOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join(SUMMARY_FILE))?;
    for row in &out.summary.rows {
        w.serialize(row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(REPLICATES_FILE))?;
    for rec in &out.records {
        w.serialize(rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(CURVES_FILE))?;
    w.write_record(["method", "group", "curve", "time", "value"])?;
    for c in &out.curves {
        for (t, v) in c.times.iter().zip(&c.values) {
            w.write_record([&c.method, &c.group.to_string(), &c.curve, &t.to_string(), &v.to_string()])?;
        }
    }
    w.flush()?;

    if cfg.methods.len() >= 2 {
        let mut w = csv::Writer::from_path(dir.join(COMPARISON_FILE))?;
        let mut header = vec!["estimand".to_string(), "group".to_string(), "truth".to_string()];
        header.extend(cfg.methods.iter().map(|m| format!("{}_abs_bias", m.name)));
        w.write_record(&header)?;
        for e in &cfg.estimands {
            let label = e.to_string();
            for g in 0..2u8 {
                let first = out.summary.get(&label, g, &cfg.methods[0].name).expect("summary row");
                let mut row = vec![label.clone(), g.to_string(), first.truth.to_string()];
                for m in &cfg.methods {
                    let r = out.summary.get(&label, g, &m.name).expect("summary row");
                    row.push(r.bias.abs().to_string());
                }
                w.write_record(&row)?;
            }
        }
        w.flush()?;
    }

    let mut resolved = cfg.clone();
    resolved.output_dir = None;
    fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(&resolved)? + "\n")?;
    Ok(())
}
