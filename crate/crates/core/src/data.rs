//! Dataset representation for monotone-missing trial data.
//!
//! A [`Dataset`] holds one record per subject: treatment arm, baseline
//! covariates, the last time in study `T_c`, a single time-to-event outcome,
//! a list of recurrent-event times and, for every continuous or binary
//! variable, one slot per visit on the [`IntervalGrid`]. A visit value is
//! present iff the visit time is at or before `T_c`.
//!
//! Intervals are half-open, `(t_{j-1}, t_j]`, so an event falling exactly on a
//! grid point belongs to the interval that closes at that point.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Continuous,
    Binary,
    Tte,
    Ttre,
}

impl VariableKind {
    pub fn is_longitudinal(self) -> bool {
        matches!(self, VariableKind::Continuous | VariableKind::Binary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    /// Only meaningful for the time-to-event variable.
    #[serde(default)]
    pub terminal: bool,
}

impl VariableSpec {
    pub fn new(name: impl Into<String>, kind: VariableKind) -> Self {
        Self {
            name: name.into(),
            kind,
            terminal: false,
        }
    }

    pub fn terminal(mut self, terminal: bool) -> Self {
        self.terminal = terminal;
        self
    }
}

/// Partition `0 = t_0 < t_1 < ... < t_J = t_max` of the study period. The
/// partition points double as the visit schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct IntervalGrid {
    times: Vec<f64>,
}

impl IntervalGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidArgument(
                "interval grid needs at least two time points".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidArgument(
                "interval grid must start at 0".into(),
            ));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(
                "interval grid has non-finite time".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "interval grid must be strictly increasing".into(),
            ));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of intervals `J`.
    pub fn n_intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn n_visits(&self) -> usize {
        self.times.len()
    }

    pub fn t(&self, j: usize) -> f64 {
        self.times[j]
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Width `t_j - t_{j-1}` of interval `j` (1-based).
    pub fn width(&self, j: usize) -> f64 {
        self.times[j] - self.times[j - 1]
    }

    /// Largest visit index `j` with `t_j <= t`.
    pub fn last_visit_at_or_before(&self, t: f64) -> usize {
        self.times.partition_point(|&tj| tj <= t).saturating_sub(1)
    }

    /// Index of the visit at exactly `t`, if any.
    pub fn visit_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&tj| tj == t)
    }
}

impl TryFrom<Vec<f64>> for IntervalGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        IntervalGrid::new(v)
    }
}

impl From<IntervalGrid> for Vec<f64> {
    fn from(g: IntervalGrid) -> Self {
        g.times
    }
}

/// `T_1 = min(T_1*, T_c)` with its event indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TteOutcome {
    pub time: f64,
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    /// Treatment arm, 0 or 1.
    pub treatment: u8,
    pub baseline: Vec<f64>,
    /// Last time in study.
    pub censor_time: f64,
    pub tte: TteOutcome,
    /// Strictly increasing, all at or before `censor_time`.
    pub recurrent_times: Vec<f64>,
    /// One entry per longitudinal variable in schema order, each of length
    /// `J + 1` (index 0 is the baseline visit).
    pub longitudinal: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Vec<VariableSpec>,
    pub grid: IntervalGrid,
    pub subjects: Vec<SubjectRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    Schema,
    DuplicateId,
    Treatment,
    BaselineLength,
    CensorTime,
    TteAfterCensoring,
    CensoredTteMismatch,
    EventAfterCensoring,
    RecurrentOrder,
    LongitudinalShape,
    NonMonotone,
    ObservedAfterCensoring,
    MissingBeforeCensoring,
    BinaryValue,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub subject: Option<String>,
    pub kind: ViolationKind,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.subject {
            Some(id) => write!(f, "subject {id}: {}", self.reason),
            None => write!(f, "{}", self.reason),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, subject: Option<&str>, kind: ViolationKind, reason: impl Into<String>) {
        self.violations.push(Violation {
            subject: subject.map(str::to_owned),
            kind,
            reason: reason.into(),
        });
    }
}

/// Time-to-event state relative to the start of an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeTte {
    /// `min(T_1 - t_{j-1}, t_j - t_{j-1})`.
    pub time: f64,
    /// `I(T_1 > t_j)`.
    pub beyond_interval: bool,
    /// The event occurred inside `(t_{j-1}, t_j]`.
    pub event_in_interval: bool,
}

/// Per-interval summary of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalView {
    pub subject: String,
    pub interval: usize,
    /// Undefined when `T_1 <= t_{j-1}`.
    pub z1: Option<RelativeTte>,
    /// Event observed at or before `t_j`.
    pub z1_star: u8,
    /// Recurrent-event times inside the interval, relative to `t_{j-1}`.
    pub z2: Vec<f64>,
    pub z2_star: usize,
    /// Longitudinal values at `t_j`, schema order.
    pub zk: Vec<Option<f64>>,
}

impl Dataset {
    pub fn new(schema: Vec<VariableSpec>, grid: IntervalGrid, subjects: Vec<SubjectRecord>) -> Self {
        Self {
            schema,
            grid,
            subjects,
        }
    }

    /// Builds the dataset and rejects it if [`validate_dataset`] reports anything.
    pub fn validated(
        schema: Vec<VariableSpec>,
        grid: IntervalGrid,
        subjects: Vec<SubjectRecord>,
    ) -> Result<Self> {
        let d = Self::new(schema, grid, subjects);
        let report = validate_dataset(&d);
        if report.is_valid() {
            Ok(d)
        } else {
            Err(Error::Validation(report.violations))
        }
    }

    /// Longitudinal variables in schema order.
    pub fn longitudinal_specs(&self) -> Vec<&VariableSpec> {
        self.schema.iter().filter(|v| v.kind.is_longitudinal()).collect()
    }

    pub fn n_longitudinal(&self) -> usize {
        self.schema.iter().filter(|v| v.kind.is_longitudinal()).count()
    }

    pub fn tte_spec(&self) -> Option<&VariableSpec> {
        self.schema.iter().find(|v| v.kind == VariableKind::Tte)
    }

    pub fn ttre_spec(&self) -> Option<&VariableSpec> {
        self.schema.iter().find(|v| v.kind == VariableKind::Ttre)
    }

    pub fn has_ttre(&self) -> bool {
        self.ttre_spec().is_some()
    }

    pub fn is_terminal(&self) -> bool {
        self.tte_spec().map(|v| v.terminal).unwrap_or(false)
    }

    pub fn n_baseline(&self) -> usize {
        self.subjects.first().map(|s| s.baseline.len()).unwrap_or(0)
    }

    pub fn subject_index(&self, id: &str) -> Result<usize> {
        self.subjects
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::UnknownSubject(id.to_owned()))
    }

    pub fn subject(&self, id: &str) -> Result<&SubjectRecord> {
        Ok(&self.subjects[self.subject_index(id)?])
    }

    pub fn count_missing(&self) -> usize {
        self.subjects
            .iter()
            .flat_map(|s| s.longitudinal.iter().flatten())
            .filter(|v| v.is_none())
            .count()
    }
}

pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    validate_schema(&d.schema, &mut report);
    if let Err(e) = IntervalGrid::new(d.grid.times().to_vec()) {
        report.push(None, ViolationKind::Schema, e.to_string());
        return report;
    }

    let n_long = d.n_longitudinal();
    let binary: Vec<bool> = d
        .longitudinal_specs()
        .iter()
        .map(|v| v.kind == VariableKind::Binary)
        .collect();
    let n_baseline = d.n_baseline();
    let mut seen = HashSet::new();

    for s in &d.subjects {
        validate_subject(s, d, n_long, &binary, n_baseline, &mut seen, &mut report);
    }
    report
}

fn validate_schema(schema: &[VariableSpec], report: &mut ValidationReport) {
    let n_tte = schema.iter().filter(|v| v.kind == VariableKind::Tte).count();
    let n_ttre = schema.iter().filter(|v| v.kind == VariableKind::Ttre).count();
    if n_tte != 1 {
        report.push(
            None,
            ViolationKind::Schema,
            format!("schema needs exactly one tte variable, found {n_tte}"),
        );
    }
    if n_ttre > 1 {
        report.push(
            None,
            ViolationKind::Schema,
            format!("schema allows at most one ttre variable, found {n_ttre}"),
        );
    }
    let mut names = HashSet::new();
    for v in schema {
        if !names.insert(v.name.as_str()) {
            report.push(
                None,
                ViolationKind::Schema,
                format!("duplicate variable name `{}`", v.name),
            );
        }
        if v.terminal && v.kind != VariableKind::Tte {
            report.push(
                None,
                ViolationKind::Schema,
                format!("only the tte variable can be terminal (`{}`)", v.name),
            );
        }
    }
}

fn validate_subject(
    s: &SubjectRecord,
    d: &Dataset,
    n_long: usize,
    binary: &[bool],
    n_baseline: usize,
    seen: &mut HashSet<String>,
    report: &mut ValidationReport,
) {
    let id = Some(s.id.as_str());
    let grid = &d.grid;
    if !seen.insert(s.id.clone()) {
        report.push(id, ViolationKind::DuplicateId, "duplicate subject id");
    }
    if s.treatment > 1 {
        report.push(id, ViolationKind::Treatment, "treatment must be 0 or 1");
    }
    if s.baseline.len() != n_baseline {
        report.push(
            id,
            ViolationKind::BaselineLength,
            format!("expected {n_baseline} baseline covariates, found {}", s.baseline.len()),
        );
    }
    if s.baseline.iter().any(|x| !x.is_finite()) {
        report.push(id, ViolationKind::NonFinite, "non-finite baseline covariate");
    }

    let tc = s.censor_time;
    if !(tc > 0.0 && tc <= grid.t_max()) {
        report.push(
            id,
            ViolationKind::CensorTime,
            format!("censor time {tc} outside (0, {}]", grid.t_max()),
        );
    }
    if !(s.tte.time > 0.0) || !s.tte.time.is_finite() {
        report.push(id, ViolationKind::CensorTime, "tte time must be positive");
    }
    if s.tte.time > tc {
        report.push(
            id,
            ViolationKind::TteAfterCensoring,
            format!("tte time {} after censoring at {tc}", s.tte.time),
        );
    }
    if !s.tte.event && s.tte.time != tc {
        report.push(
            id,
            ViolationKind::CensoredTteMismatch,
            "censored tte time must equal the censor time",
        );
    }

    if s.recurrent_times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        report.push(id, ViolationKind::RecurrentOrder, "recurrent times must be positive");
    }
    if s.recurrent_times.windows(2).any(|w| w[1] <= w[0]) {
        report.push(
            id,
            ViolationKind::RecurrentOrder,
            "recurrent times must be strictly increasing",
        );
    }
    if let Some(&t) = s.recurrent_times.iter().find(|&&t| t > tc) {
        report.push(
            id,
            ViolationKind::EventAfterCensoring,
            format!("event after censoring: recurrent time {t} > {tc}"),
        );
    }

    if s.longitudinal.len() != n_long
        || s.longitudinal.iter().any(|v| v.len() != grid.n_visits())
    {
        report.push(
            id,
            ViolationKind::LongitudinalShape,
            format!(
                "expected {n_long} longitudinal series of length {}",
                grid.n_visits()
            ),
        );
        return;
    }

    let specs = d.longitudinal_specs();
    for (k, series) in s.longitudinal.iter().enumerate() {
        let name = &specs[k].name;
        let mut seen_missing = false;
        let mut flagged_nonmonotone = false;
        for (j, value) in series.iter().enumerate() {
            let due = grid.t(j) <= tc;
            match value {
                None => {
                    seen_missing = true;
                    if due && !series[j + 1..].iter().any(Option::is_some) {
                        report.push(
                            id,
                            ViolationKind::MissingBeforeCensoring,
                            format!("`{name}` missing at visit {j} before censoring"),
                        );
                    }
                }
                Some(v) => {
                    if seen_missing && !flagged_nonmonotone {
                        flagged_nonmonotone = true;
                        report.push(
                            id,
                            ViolationKind::NonMonotone,
                            format!("non-monotone longitudinal pattern in `{name}` at visit {j}"),
                        );
                    } else if !due {
                        report.push(
                            id,
                            ViolationKind::ObservedAfterCensoring,
                            format!("`{name}` observed at visit {j} after censoring"),
                        );
                    }
                    if !v.is_finite() {
                        report.push(
                            id,
                            ViolationKind::NonFinite,
                            format!("non-finite `{name}` at visit {j}"),
                        );
                    } else if binary[k] && *v != 0.0 && *v != 1.0 {
                        report.push(
                            id,
                            ViolationKind::BinaryValue,
                            format!("binary `{name}` has value {v} at visit {j}"),
                        );
                    }
                }
            }
        }
    }
}

/// Interval-`j` summary of one subject (`1 <= j <= J`).
pub fn interval_view(d: &Dataset, subject: &str, j: usize) -> Result<IntervalView> {
    let s = d.subject(subject)?;
    let big_j = d.grid.n_intervals();
    if j == 0 || j > big_j {
        return Err(Error::IntervalOutOfRange { index: j, max: big_j });
    }
    Ok(view_of(s, &d.grid, j))
}

pub(crate) fn view_of(s: &SubjectRecord, grid: &IntervalGrid, j: usize) -> IntervalView {
    let (lo, hi) = (grid.t(j - 1), grid.t(j));
    let t1 = s.tte.time;
    let z1 = (t1 > lo).then(|| RelativeTte {
        time: (t1 - lo).min(hi - lo),
        beyond_interval: t1 > hi,
        event_in_interval: s.tte.event && t1 <= hi,
    });
    let z1_star = u8::from(s.tte.event && t1 <= hi);
    let z2: Vec<f64> = s
        .recurrent_times
        .iter()
        .filter(|&&t| t > lo && t <= hi)
        .map(|&t| t - lo)
        .collect();
    IntervalView {
        subject: s.id.clone(),
        interval: j,
        z1,
        z1_star,
        z2_star: z2.len(),
        z2,
        zk: s.longitudinal.iter().map(|series| series[j]).collect(),
    }
}

/// Largest visit index `j` with `t_j <= T_c`.
pub fn last_observed_interval(d: &Dataset, subject: &str) -> Result<usize> {
    let s = d.subject(subject)?;
    Ok(d.grid.last_visit_at_or_before(s.censor_time))
}
