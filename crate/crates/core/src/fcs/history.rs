use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SubjectRecord, VariableKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    /// Every per-interval summary from interval 1 to `j - 1`.
    #[default]
    Full,
    /// Event flag at `t_{j-1}`, cumulative recurrent count and the latest
    /// longitudinal values only.
    Composite,
}

/// Which variable groups enter each model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependency {
    /// Every model conditions on clinical and longitudinal history.
    #[default]
    Full,
    /// Event models see only event history and longitudinal models see only
    /// longitudinal history.
    Separated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignRecipe {
    pub mode: HistoryMode,
    pub dependency: Dependency,
    pub include_treatment: bool,
}

impl DesignRecipe {
    fn clinical_allowed(&self, kind: VariableKind) -> bool {
        self.dependency == Dependency::Full || !kind.is_longitudinal()
    }

    fn longitudinal_allowed(&self, kind: VariableKind) -> bool {
        self.dependency == Dependency::Full || kind.is_longitudinal()
    }
}

/// Covariate vector of one subject for an interval model, with labels that
/// name its columns.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryVector {
    pub values: Vec<f64>,
    pub labels: Vec<String>,
}

impl HistoryVector {
    fn push(&mut self, label: String, value: f64) {
        self.labels.push(label);
        self.values.push(value);
    }
}

fn missing(s: &SubjectRecord, what: String) -> Error {
    Error::MissingHistory {
        subject: s.id.clone(),
        what,
    }
}

/// Covariates for modelling variable `kind` in interval `j` of subject
/// `index`, built from the subject's history through `t_{j-1}`.
///
/// Event history is read from the record as it stands, so the subject must
/// be followed (observed or imputed) through `t_{j-1}`.
pub fn build_history(
    d: &Dataset,
    index: usize,
    j: usize,
    kind: VariableKind,
    recipe: &DesignRecipe,
) -> Result<HistoryVector> {
    let big_j = d.grid.n_intervals();
    if j == 0 || j > big_j {
        return Err(Error::IntervalOutOfRange { index: j, max: big_j });
    }
    let s = d
        .subjects
        .get(index)
        .ok_or_else(|| Error::UnknownSubject(format!("#{index}")))?;
    let grid = &d.grid;
    if s.censor_time < grid.t(j - 1) {
        return Err(missing(s, format!("follow-up ends at {} before t = {}", s.censor_time, grid.t(j - 1))));
    }
    let tte_name = d.tte_spec().map(|v| v.name.as_str()).unwrap_or("tte");
    let ttre_name = d.ttre_spec().map(|v| v.name.as_str());
    let long_specs = d.longitudinal_specs();

    let mut h = HistoryVector {
        values: Vec::new(),
        labels: Vec::new(),
    };
    h.push("intercept".into(), 1.0);
    for (q, x) in s.baseline.iter().enumerate() {
        h.push(format!("x_{}", q + 1), *x);
    }
    if recipe.include_treatment {
        h.push("treatment".into(), f64::from(s.treatment));
    }

    let event_by = |l: usize| f64::from(u8::from(s.tte.event && s.tte.time <= grid.t(l)));
    let count_in = |lo: f64, hi: f64| s.recurrent_times.iter().filter(|&&t| t > lo && t <= hi).count() as f64;
    let long_value = |k: usize, l: usize| -> Result<f64> {
        s.longitudinal[k][l].ok_or_else(|| missing(s, format!("`{}` at visit {l}", long_specs[k].name)))
    };
    let clinical = recipe.clinical_allowed(kind);
    let longitudinal = recipe.longitudinal_allowed(kind);

    if recipe.mode == HistoryMode::Composite && j > 1 {
        if clinical && kind != VariableKind::Tte {
            h.push(format!("{tte_name}_event_{}", j - 1), event_by(j - 1));
        }
        if let (true, Some(name)) = (clinical, ttre_name) {
            h.push(format!("{name}_count_cum"), count_in(0.0, grid.t(j - 1)));
        }
        if longitudinal {
            for (k, spec) in long_specs.iter().enumerate() {
                h.push(format!("{}_last", spec.name), long_value(k, j - 1)?);
            }
        }
        return Ok(h);
    }

    if longitudinal {
        for (k, spec) in long_specs.iter().enumerate() {
            h.push(format!("{}_0", spec.name), long_value(k, 0)?);
        }
    }
    for l in 1..j {
        if clinical && kind != VariableKind::Tte {
            h.push(format!("{tte_name}_event_{l}"), event_by(l));
        }
        if let (true, Some(name)) = (clinical, ttre_name) {
            h.push(format!("{name}_count_{l}"), count_in(grid.t(l - 1), grid.t(l)));
        }
        if longitudinal {
            for (k, spec) in long_specs.iter().enumerate() {
                h.push(format!("{}_{l}", spec.name), long_value(k, l)?);
            }
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{IntervalGrid, TteOutcome, VariableSpec};

    fn toy() -> Dataset {
        let grid = IntervalGrid::new(vec![0.0, 3.0, 6.0, 9.0, 12.0]).unwrap();
        let schema = vec![
            VariableSpec::new("y1", VariableKind::Tte),
            VariableSpec::new("y2", VariableKind::Ttre),
            VariableSpec::new("y3", VariableKind::Continuous),
            VariableSpec::new("y4", VariableKind::Binary),
        ];
        let s = SubjectRecord {
            id: "a".into(),
            treatment: 1,
            baseline: vec![0.25],
            censor_time: 6.0,
            tte: TteOutcome { time: 4.0, event: true },
            recurrent_times: vec![1.0, 2.0, 3.0, 5.5],
            longitudinal: vec![
                vec![Some(0.1), Some(0.2), Some(0.3), None, None],
                vec![Some(1.0), Some(0.0), Some(1.0), None, None],
            ],
        };
        Dataset::new(schema, grid, vec![s])
    }

    fn recipe(mode: HistoryMode, dependency: Dependency) -> DesignRecipe {
        DesignRecipe {
            mode,
            dependency,
            include_treatment: true,
        }
    }

    #[test]
    fn first_interval_has_baseline_only() {
        let d = toy();
        for mode in [HistoryMode::Full, HistoryMode::Composite] {
            let h = build_history(&d, 0, 1, VariableKind::Continuous, &recipe(mode, Dependency::Full)).unwrap();
            assert_eq!(h.labels, ["intercept", "x_1", "treatment", "y3_0", "y4_0"]);
            assert_eq!(h.values, [1.0, 0.25, 1.0, 0.1, 1.0]);
        }
    }

    #[test]
    fn full_history_hand_enumeration() {
        let d = toy();
        let h = build_history(&d, 0, 3, VariableKind::Continuous, &recipe(HistoryMode::Full, Dependency::Full)).unwrap();
        assert_eq!(
            h.labels,
            [
                "intercept", "x_1", "treatment", "y3_0", "y4_0", "y1_event_1", "y2_count_1", "y3_1", "y4_1",
                "y1_event_2", "y2_count_2", "y3_2", "y4_2"
            ]
        );
        // event at 4 is after t_1 = 3 and by t_2 = 6; counts 3 then 1
        assert_eq!(h.values, [1.0, 0.25, 1.0, 0.1, 1.0, 0.0, 3.0, 0.2, 0.0, 1.0, 1.0, 0.3, 1.0]);
    }

    #[test]
    fn tte_history_has_no_event_columns() {
        let d = toy();
        let h = build_history(&d, 0, 3, VariableKind::Tte, &recipe(HistoryMode::Full, Dependency::Full)).unwrap();
        assert!(h.labels.iter().all(|l| !l.starts_with("y1")));
        assert_eq!(h.values.len(), 11);
    }

    #[test]
    fn composite_history() {
        let d = toy();
        let h = build_history(&d, 0, 3, VariableKind::Binary, &recipe(HistoryMode::Composite, Dependency::Full)).unwrap();
        assert_eq!(h.labels, ["intercept", "x_1", "treatment", "y1_event_2", "y2_count_cum", "y3_last", "y4_last"]);
        assert_eq!(h.values, [1.0, 0.25, 1.0, 1.0, 4.0, 0.3, 1.0]);
    }

    #[test]
    fn separated_dependency() {
        let d = toy();
        let r = recipe(HistoryMode::Full, Dependency::Separated);
        let h = build_history(&d, 0, 2, VariableKind::Ttre, &r).unwrap();
        assert_eq!(h.labels, ["intercept", "x_1", "treatment", "y1_event_1", "y2_count_1"]);
        let h = build_history(&d, 0, 2, VariableKind::Continuous, &r).unwrap();
        assert_eq!(h.labels, ["intercept", "x_1", "treatment", "y3_0", "y4_0", "y3_1", "y4_1"]);
    }

    #[test]
    fn missing_history_is_an_error() {
        let d = toy();
        let r = recipe(HistoryMode::Full, Dependency::Full);
        assert!(matches!(
            build_history(&d, 0, 4, VariableKind::Continuous, &r),
            Err(Error::MissingHistory { .. })
        ));
        assert!(build_history(&d, 0, 5, VariableKind::Continuous, &r).is_err());
        let mut d2 = d.clone();
        d2.subjects[0].censor_time = 12.0;
        assert!(matches!(
            build_history(&d2, 0, 4, VariableKind::Continuous, &r),
            Err(Error::MissingHistory { .. })
        ));
    }
}
