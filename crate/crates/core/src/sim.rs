//! Synthetic two-arm trial generator with a time-to-event outcome, a
//! recurrent event, a continuous and a binary longitudinal variable.
//!
//! Longitudinal variables follow an exponential-saturation mean
//! `m_k(t) = b0 + b1·x + (b2·a + s_k)(1 - exp(-κ_k t))` plus visit-level
//! noise; the event processes have hazards that depend on `m_3(t)` and
//! `m_4(t)` and are sampled by numerically inverting the survival function.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, IntervalGrid, SubjectRecord, TteOutcome, VariableKind, VariableSpec};
use crate::error::{Error, Result};
use crate::rng::{RandomStream, StreamKey};

pub const QUADRATURE_TOLERANCE: f64 = 1e-10;
pub const ROOT_TOLERANCE: f64 = 1e-8;
const TABLE_STEP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Censoring {
    /// Distribution of the censoring visit: `probabilities[j-1]` is the
    /// chance that follow-up ends at visit `j`. The last entry is the share
    /// followed to the end of the study, so the entries sum to one.
    Independent { probabilities: Vec<f64> },
    /// Per-visit conditional probability of ending follow-up,
    /// `logit π_j = intercept + y3·Y_3j + y4·Y_4j`.
    Dependent { intercept: f64, y3: f64, y4: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensoringMechanism {
    Independent,
    Dependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    PaperMain,
    PaperReducedDependency,
}

impl Preset {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "paper_main" => Ok(Preset::PaperMain),
            "paper_reduced_dependency" => Ok(Preset::PaperReducedDependency),
            other => Err(Error::InvalidArgument(format!("unknown preset `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::PaperMain => "paper_main",
            Preset::PaperReducedDependency => "paper_reduced_dependency",
        }
    }

    pub fn config(self, mechanism: CensoringMechanism) -> SimulationConfig {
        let mut cfg = SimulationConfig::default();
        if self == Preset::PaperReducedDependency {
            cfg.alpha1 = [-0.2, 0.0, -0.5, 1.5];
            cfg.alpha2 = [-0.2, 0.0, -0.5, 1.5];
        }
        cfg.censoring = match (self, mechanism) {
            (_, CensoringMechanism::Independent) => Censoring::Independent {
                probabilities: vec![0.15, 0.2, 0.25, 0.4],
            },
            (Preset::PaperMain, CensoringMechanism::Dependent) => Censoring::Dependent {
                intercept: -1.0,
                y3: 0.8,
                y4: -0.5,
            },
            (Preset::PaperReducedDependency, CensoringMechanism::Dependent) => Censoring::Dependent {
                intercept: -1.0,
                y3: 1.8,
                y4: 0.5,
            },
        };
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n: usize,
    pub grid: IntervalGrid,
    pub mu_x: f64,
    pub sigma_x: f64,
    /// `(b0, b1, b2)` of the continuous variable's mean.
    pub beta3: [f64; 3],
    pub beta4: [f64; 3],
    pub kappa3: f64,
    pub kappa4: f64,
    /// Random-effect variances.
    pub sigma2_3s: f64,
    pub sigma2_4s: f64,
    /// Correlation of the two random effects.
    pub rho: f64,
    /// Visit-level residual variances for variables 3 and 4.
    pub sigma2_eps: [f64; 2],
    pub lambda10: f64,
    pub lambda20: f64,
    /// `(treatment, x, m_3, m_4)` coefficients of the event hazard.
    pub alpha1: [f64; 4],
    /// Same for the recurrent-event rate.
    pub alpha2: [f64; 4],
    pub censoring: Censoring,
}

impl Default for SimulationConfig {
    /// The main two-arm design with independent censoring.
    fn default() -> Self {
        Self {
            n: 500,
            grid: IntervalGrid::new(vec![0.0, 3.0, 6.0, 9.0, 12.0]).expect("static grid"),
            mu_x: 0.0,
            sigma_x: 1.0,
            beta3: [0.0, 1.0, -0.5],
            beta4: [0.0, 1.0, -0.5],
            kappa3: 0.5,
            kappa4: 0.15,
            sigma2_3s: 0.1,
            sigma2_4s: 0.1,
            rho: 0.5,
            sigma2_eps: [0.16, 0.16],
            lambda10: 0.08,
            lambda20: 0.13,
            alpha1: [-0.7, 0.5, 0.5, -0.5],
            alpha2: [-0.7, 0.5, 0.5, -0.5],
            censoring: Censoring::Independent {
                probabilities: vec![0.15, 0.2, 0.25, 0.4],
            },
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_owned()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        let vars = [self.sigma_x, self.sigma2_3s, self.sigma2_4s, self.sigma2_eps[0], self.sigma2_eps[1]];
        if vars.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad("variances must be positive");
        }
        if !(self.kappa3 > 0.0 && self.kappa4 > 0.0) {
            return bad("rate constants must be positive");
        }
        if !(self.rho.abs() <= 1.0) {
            return bad("rho must lie in [-1, 1]");
        }
        if !(self.lambda10 > 0.0 && self.lambda20 > 0.0) {
            return bad("baseline hazards must be positive");
        }
        let finite = self
            .beta3
            .iter()
            .chain(&self.beta4)
            .chain(&self.alpha1)
            .chain(&self.alpha2)
            .chain([&self.mu_x])
            .all(|v| v.is_finite());
        if !finite {
            return bad("coefficients must be finite");
        }
        match &self.censoring {
            Censoring::Independent { probabilities } => {
                if probabilities.len() != self.grid.n_intervals() {
                    return bad("need one censoring probability per post-baseline visit");
                }
                if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return bad("censoring probabilities must lie in [0, 1]");
                }
                if (probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("censoring-visit probabilities must sum to one");
                }
            }
            Censoring::Dependent { intercept, y3, y4 } => {
                if ![intercept, y3, y4].iter().all(|v| v.is_finite()) {
                    return bad("censoring coefficients must be finite");
                }
            }
        }
        Ok(())
    }

    pub fn schema() -> Vec<VariableSpec> {
        vec![
            VariableSpec::new("y1", VariableKind::Tte),
            VariableSpec::new("y2", VariableKind::Ttre),
            VariableSpec::new("y3", VariableKind::Continuous),
            VariableSpec::new("y4", VariableKind::Binary),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectEffects {
    pub a: u8,
    pub x: f64,
    pub s3: f64,
    pub s4: f64,
}

/// Which longitudinal mean, 3 or 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trajectory {
    Y3,
    Y4,
}

pub fn itp_mean(t: f64, k: Trajectory, e: &SubjectEffects, cfg: &SimulationConfig) -> f64 {
    let (b, kappa, s) = match k {
        Trajectory::Y3 => (cfg.beta3, cfg.kappa3, e.s3),
        Trajectory::Y4 => (cfg.beta4, cfg.kappa4, e.s4),
    };
    b[0] + b[1] * e.x + (b[2] * f64::from(e.a) + s) * (1.0 - (-kappa * t).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Process {
    Tte,
    Recurrent,
}

/// Hazard `λ0·exp(α1·a + α2·x + α3·m_3(t) + α4·m_4(t))` of one subject.
#[derive(Debug, Clone)]
pub struct SubjectHazard {
    log_scale: f64,
    a3: f64,
    a4: f64,
    m3: (f64, f64, f64),
    m4: (f64, f64, f64),
}

impl SubjectHazard {
    pub fn new(e: &SubjectEffects, cfg: &SimulationConfig, which: Process) -> Self {
        let (lambda0, alpha) = match which {
            Process::Tte => (cfg.lambda10, cfg.alpha1),
            Process::Recurrent => (cfg.lambda20, cfg.alpha2),
        };
        let a = f64::from(e.a);
        let level = |b: [f64; 3]| b[0] + b[1] * e.x;
        Self {
            log_scale: lambda0.ln() + alpha[0] * a + alpha[1] * e.x,
            a3: alpha[2],
            a4: alpha[3],
            m3: (level(cfg.beta3), cfg.beta3[2] * a + e.s3, cfg.kappa3),
            m4: (level(cfg.beta4), cfg.beta4[2] * a + e.s4, cfg.kappa4),
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        let m = |(level, amp, kappa): (f64, f64, f64)| level + amp * (1.0 - (-kappa * t).exp());
        (self.log_scale + self.a3 * m(self.m3) + self.a4 * m(self.m4)).exp()
    }

    /// `∫_a^b rate` by adaptive Simpson.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let (fa, fm, fb) = (self.rate(a), self.rate(0.5 * (a + b)), self.rate(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        self.simpson(a, b, fa, fm, fb, whole, QUADRATURE_TOLERANCE, 40)
    }

    #[allow(clippy::too_many_arguments)]
    fn simpson(&self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (self.rate(lm), self.rate(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        self.simpson(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + self.simpson(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Cumulative hazard from 0 tabulated on a fixed step up to a cap, used to
/// invert `Λ(t) = target`.
#[derive(Debug, Clone)]
pub struct CumulativeHazard {
    hazard: SubjectHazard,
    knots: Vec<f64>,
}

impl CumulativeHazard {
    pub fn new(hazard: SubjectHazard, cap: f64) -> Self {
        let steps = (cap / TABLE_STEP).ceil().max(1.0) as usize;
        let mut knots = Vec::with_capacity(steps + 1);
        knots.push(0.0);
        let mut acc = 0.0;
        for i in 0..steps {
            let (a, b) = (i as f64 * TABLE_STEP, ((i + 1) as f64 * TABLE_STEP).min(cap));
            acc += hazard.integrate(a, b);
            knots.push(acc);
        }
        Self { hazard, knots }
    }

    pub fn cap(&self) -> f64 {
        ((self.knots.len() - 1) as f64 * TABLE_STEP).max(0.0)
    }

    pub fn hazard(&self) -> &SubjectHazard {
        &self.hazard
    }

    pub fn at(&self, t: f64) -> f64 {
        let i = ((t / TABLE_STEP).floor() as usize).min(self.knots.len() - 1);
        self.knots[i] + self.hazard.integrate(i as f64 * TABLE_STEP, t)
    }

    /// Smallest `t` with `Λ(t) = target`, or `+∞` past the cap.
    pub fn invert(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        let Some(last) = self.knots.iter().rposition(|&k| k < target) else {
            return 0.0;
        };
        if last + 1 >= self.knots.len() {
            return f64::INFINITY;
        }
        let (lo0, base) = (last as f64 * TABLE_STEP, self.knots[last]);
        let (mut lo, mut hi) = (lo0, ((last + 1) as f64 * TABLE_STEP).min(self.cap()));
        let mut t = (lo + (target - base) / self.hazard.rate(lo)).clamp(lo, hi);
        for _ in 0..100 {
            let f = base + self.hazard.integrate(lo0, t) - target;
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let newton = t - f / self.hazard.rate(t);
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            let done = (next - t).abs() < 0.01 * ROOT_TOLERANCE || hi - lo < 0.01 * ROOT_TOLERANCE;
            t = next;
            if done {
                break;
            }
        }
        t
    }
}

/// First event time after `start` for a subject with survival `exp(-Λ)`,
/// using `u ~ Uniform(0,1]` so that `Λ(start, t) = -ln u`. Returns `+∞`
/// when the event falls beyond the hazard table's cap.
pub fn sample_event_time(cum: &CumulativeHazard, start: f64, stream: &mut RandomStream) -> f64 {
    let u = stream.uniform_open0();
    event_time_from_uniform(cum, start, u)
}

pub fn event_time_from_uniform(cum: &CumulativeHazard, start: f64, u: f64) -> f64 {
    cum.invert(cum.at(start) - u.ln())
}

/// All uncensored quantities for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSubject {
    pub effects: SubjectEffects,
    /// `Y_3` and `Y_4` at every visit.
    pub y3: Vec<f64>,
    pub y4: Vec<f64>,
    /// Latent event time, possibly beyond the study horizon (`+∞` when past
    /// the sampling cap).
    pub t1: f64,
    /// Recurrent-event times within `(0, t_max]`.
    pub recurrent: Vec<f64>,
}

/// Draws subject `index` from its own stream under `key`.
pub fn simulate_subject(cfg: &SimulationConfig, key: &StreamKey, index: usize) -> SimulatedSubject {
    let mut s = key.child("subject", index as u64).stream();
    let a = u8::from(s.uniform() < 0.5);
    let x = s.normal(cfg.mu_x, cfg.sigma_x);
    let (z1, z2) = (s.standard_normal(), s.standard_normal());
    let (sd3, sd4) = (cfg.sigma2_3s.sqrt(), cfg.sigma2_4s.sqrt());
    let s3 = sd3 * z1;
    let s4 = sd4 * (cfg.rho * z1 + (1.0 - cfg.rho * cfg.rho).max(0.0).sqrt() * z2);
    let effects = SubjectEffects { a, x, s3, s4 };

    let (e3, e4) = (cfg.sigma2_eps[0].sqrt(), cfg.sigma2_eps[1].sqrt());
    let mut y3 = Vec::with_capacity(cfg.grid.n_visits());
    let mut y4 = Vec::with_capacity(cfg.grid.n_visits());
    for &t in cfg.grid.times() {
        y3.push(itp_mean(t, Trajectory::Y3, &effects, cfg) + e3 * s.standard_normal());
        let latent = itp_mean(t, Trajectory::Y4, &effects, cfg) + e4 * s.standard_normal();
        y4.push(if latent >= 0.0 { 1.0 } else { 0.0 });
    }

    // Only times within the study matter, so the table stops at t_max.
    let t_max = cfg.grid.t_max();
    let tte = CumulativeHazard::new(SubjectHazard::new(&effects, cfg, Process::Tte), t_max);
    let t1 = sample_event_time(&tte, 0.0, &mut s);

    let rec = CumulativeHazard::new(SubjectHazard::new(&effects, cfg, Process::Recurrent), t_max);
    let mut recurrent = Vec::new();
    let mut last = 0.0;
    loop {
        let t = sample_event_time(&rec, last, &mut s);
        if t > t_max {
            break;
        }
        if t > last {
            recurrent.push(t);
            last = t;
        }
    }
    SimulatedSubject { effects, y3, y4, t1, recurrent }
}

/// Visit index at which the subject is censored; `J` when follow-up runs to
/// the end.
pub fn censoring_visit(subject: &SimulatedSubject, cfg: &SimulationConfig, stream: &mut RandomStream) -> usize {
    let big_j = cfg.grid.n_intervals();
    match &cfg.censoring {
        Censoring::Independent { probabilities } => {
            let u = stream.uniform();
            let mut cum = 0.0;
            for (j, p) in probabilities.iter().enumerate().take(big_j - 1) {
                cum += p;
                if u < cum {
                    return j + 1;
                }
            }
            big_j
        }
        Censoring::Dependent { intercept, y3, y4 } => {
            for j in 1..=big_j {
                let eta = intercept + y3 * subject.y3[j] + y4 * subject.y4[j];
                if stream.uniform() < 1.0 / (1.0 + (-eta).exp()) {
                    return j;
                }
            }
            big_j
        }
    }
}

fn record(sim: &SimulatedSubject, index: usize, grid: &IntervalGrid, tc: f64) -> SubjectRecord {
    let tte = if sim.t1 <= tc {
        TteOutcome { time: sim.t1, event: true }
    } else {
        TteOutcome { time: tc, event: false }
    };
    let mask = |series: &[f64]| -> Vec<Option<f64>> {
        series.iter().zip(grid.times()).map(|(&v, &t)| (t <= tc).then_some(v)).collect()
    };
    SubjectRecord {
        id: (index + 1).to_string(),
        treatment: sim.effects.a,
        baseline: vec![sim.effects.x],
        censor_time: tc,
        tte,
        recurrent_times: sim.recurrent.iter().copied().filter(|&t| t <= tc).collect(),
        longitudinal: vec![mask(&sim.y3), mask(&sim.y4)],
    }
}

/// Applies the configured censoring mechanism to a complete dataset. The
/// value at the censoring visit stays observed.
pub fn apply_censoring(d: &Dataset, cfg: &SimulationConfig, key: &StreamKey) -> Result<Dataset> {
    cfg.validate()?;
    if d.grid != cfg.grid {
        return Err(Error::InvalidArgument("dataset grid differs from the configuration".into()));
    }
    let subjects = d
        .subjects
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let sim = SimulatedSubject {
                effects: SubjectEffects { a: s.treatment, x: s.baseline.first().copied().unwrap_or(0.0), s3: 0.0, s4: 0.0 },
                y3: s.longitudinal[0].iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
                y4: s.longitudinal[1].iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
                t1: if s.tte.event { s.tte.time } else { f64::INFINITY },
                recurrent: s.recurrent_times.clone(),
            };
            let mut stream = key.child("censor", i as u64).stream();
            let j = censoring_visit(&sim, cfg, &mut stream);
            let mut r = record(&sim, i, &d.grid, d.grid.t(j).min(s.censor_time));
            r.id = s.id.clone();
            r
        })
        .collect();
    Ok(Dataset::new(d.schema.clone(), d.grid.clone(), subjects))
}

/// Simulates one trial and returns `(uncensored, censored)` datasets that
/// share every pre-censoring value.
pub fn simulate_trial(cfg: &SimulationConfig, key: &StreamKey) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let sims: Vec<SimulatedSubject> = (0..cfg.n).map(|i| simulate_subject(cfg, key, i)).collect();
    let t_max = cfg.grid.t_max();
    let mut full = Vec::with_capacity(cfg.n);
    let mut censored = Vec::with_capacity(cfg.n);
    for (i, sim) in sims.iter().enumerate() {
        let mut stream = key.child("censor", i as u64).stream();
        let j = censoring_visit(sim, cfg, &mut stream);
        full.push(record(sim, i, &cfg.grid, t_max));
        censored.push(record(sim, i, &cfg.grid, cfg.grid.t(j)));
    }
    let schema = SimulationConfig::schema();
    Ok((
        Dataset::new(schema.clone(), cfg.grid.clone(), full),
        Dataset::new(schema, cfg.grid.clone(), censored),
    ))
}
