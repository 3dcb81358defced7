//! Dataset files.
//!
//! A dataset is stored as three files:
//!
//! * `subjects.csv`: `id, treatment, x_1..x_q, tc, t1_time, t1_event`, then one
//!   column `<variable>_<visit>` per longitudinal variable and visit index
//!   (`0..=J`); an empty cell is a missing value.
//! * `events.csv`: `id, event_time`, one row per recurrent event.
//! * `schema.json`: `{"variables": [{"name", "kind", "terminal"}], "grid": [..]}`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, IntervalGrid, SubjectRecord, TteOutcome, VariableSpec};
use crate::error::{Error, Result};

pub const SUBJECTS_FILE: &str = "subjects.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const SCHEMA_FILE: &str = "schema.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub variables: Vec<VariableSpec>,
    pub grid: IntervalGrid,
}

fn parse_error(file: &Path, line: u64, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        line: line as usize,
        column: column.to_owned(),
        message: message.into(),
    }
}

struct Cells<'a> {
    file: &'a Path,
    line: u64,
    record: &'a csv::StringRecord,
}

impl Cells<'_> {
    fn text(&self, column: &str, index: usize) -> Result<&str> {
        self.record
            .get(index)
            .map(str::trim)
            .ok_or_else(|| parse_error(self.file, self.line, column, "missing cell"))
    }

    fn number(&self, column: &str, index: usize) -> Result<f64> {
        let text = self.text(column, index)?;
        let v: f64 = text
            .parse()
            .map_err(|_| parse_error(self.file, self.line, column, format!("`{text}` is not a number")))?;
        if !v.is_finite() {
            return Err(parse_error(self.file, self.line, column, format!("`{text}` is not finite")));
        }
        Ok(v)
    }

    fn optional(&self, column: &str, index: usize) -> Result<Option<f64>> {
        if self.text(column, index)?.is_empty() {
            Ok(None)
        } else {
            self.number(column, index).map(Some)
        }
    }

    fn flag(&self, column: &str, index: usize) -> Result<u8> {
        match self.text(column, index)? {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(parse_error(self.file, self.line, column, format!("`{other}` is not 0 or 1"))),
        }
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::Headers).from_path(path)?)
}

pub fn load_schema(path: &Path) -> Result<SchemaFile> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.line() as u64, "", e.to_string()))
}

/// Reads and validates a dataset. `events` may be omitted when there are no
/// recurrent events.
pub fn load_dataset(subjects: &Path, events: Option<&Path>, schema: &Path) -> Result<Dataset> {
    let schema_file = load_schema(schema)?;
    let grid = schema_file.grid;
    let long_names: Vec<String> = schema_file
        .variables
        .iter()
        .filter(|v| v.kind.is_longitudinal())
        .map(|v| v.name.clone())
        .collect();

    let mut rdr = reader(subjects)?;
    let headers = rdr.headers()?.clone();
    let col: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let find = |name: &str| -> Result<usize> {
        col.get(name)
            .copied()
            .ok_or_else(|| parse_error(subjects, 1, name, "column not found in header"))
    };
    let (c_id, c_trt, c_tc, c_time, c_event) =
        (find("id")?, find("treatment")?, find("tc")?, find("t1_time")?, find("t1_event")?);
    let mut x_cols = Vec::new();
    while let Some(&i) = col.get(format!("x_{}", x_cols.len() + 1).as_str()) {
        x_cols.push(i);
    }
    let mut long_cols = Vec::new();
    for name in &long_names {
        let cols: Vec<(String, usize)> = (0..grid.n_visits())
            .map(|j| {
                let c = format!("{name}_{j}");
                find(&c).map(|i| (c, i))
            })
            .collect::<Result<_>>()?;
        long_cols.push(cols);
    }

    let mut records = Vec::new();
    let mut index_of = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let cells = Cells { file: subjects, line, record: &row };
        let id = cells.text("id", c_id)?.to_owned();
        if id.is_empty() {
            return Err(parse_error(subjects, line, "id", "empty subject id"));
        }
        let baseline = x_cols
            .iter()
            .enumerate()
            .map(|(q, &i)| cells.number(&format!("x_{}", q + 1), i))
            .collect::<Result<Vec<_>>>()?;
        let longitudinal = long_cols
            .iter()
            .map(|cols| cols.iter().map(|(c, i)| cells.optional(c, *i)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        index_of.insert(id.clone(), records.len());
        records.push(SubjectRecord {
            id,
            treatment: cells.flag("treatment", c_trt)?,
            baseline,
            censor_time: cells.number("tc", c_tc)?,
            tte: TteOutcome {
                time: cells.number("t1_time", c_time)?,
                event: cells.flag("t1_event", c_event)? == 1,
            },
            recurrent_times: Vec::new(),
            longitudinal,
        });
    }

    if let Some(events) = events {
        let mut rdr = reader(events)?;
        let headers = rdr.headers()?.clone();
        let pos = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| parse_error(events, 1, name, "column not found in header"))
        };
        let (c_id, c_t) = (pos("id")?, pos("event_time")?);
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let cells = Cells { file: events, line, record: &row };
            let id = cells.text("id", c_id)?;
            let &i = index_of
                .get(id)
                .ok_or_else(|| parse_error(events, line, "id", format!("unknown subject `{id}`")))?;
            records[i].recurrent_times.push(cells.number("event_time", c_t)?);
        }
        for r in &mut records {
            r.recurrent_times.sort_by(f64::total_cmp);
        }
    }

    Dataset::validated(schema_file.variables, grid, records)
}

/// Loads `subjects.csv`, `events.csv` (if present) and `schema.json` from a
/// directory.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset> {
    let events = dir.join(EVENTS_FILE);
    load_dataset(
        &dir.join(SUBJECTS_FILE),
        events.exists().then_some(events.as_path()),
        &dir.join(SCHEMA_FILE),
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the three dataset files into `dir`, creating it if needed.
pub fn save_dataset(d: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let q = d.n_baseline();
    let specs = d.longitudinal_specs();

    let mut w = csv::Writer::from_path(dir.join(SUBJECTS_FILE))?;
    let mut header: Vec<String> = vec!["id".into(), "treatment".into()];
    header.extend((1..=q).map(|i| format!("x_{i}")));
    header.extend(["tc", "t1_time", "t1_event"].map(String::from));
    for v in &specs {
        header.extend((0..d.grid.n_visits()).map(|j| format!("{}_{j}", v.name)));
    }
    w.write_record(&header)?;
    for s in &d.subjects {
        let mut row: Vec<String> = vec![s.id.clone(), s.treatment.to_string()];
        row.extend(s.baseline.iter().map(f64::to_string));
        row.push(s.censor_time.to_string());
        row.push(s.tte.time.to_string());
        row.push(u8::from(s.tte.event).to_string());
        for series in &s.longitudinal {
            row.extend(series.iter().map(|v| fmt_opt(*v)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(EVENTS_FILE))?;
    w.write_record(["id", "event_time"])?;
    for s in &d.subjects {
        for t in &s.recurrent_times {
            w.write_record([s.id.as_str(), &t.to_string()])?;
        }
    }
    w.flush()?;

    let schema = SchemaFile {
        variables: d.schema.clone(),
        grid: d.grid.clone(),
    };
    fs::write(dir.join(SCHEMA_FILE), serde_json::to_string_pretty(&schema)? + "\n")?;
    Ok(())
}

/// Directory name of imputation `i` (1-based) out of `m`.
pub fn imputation_dir_name(i: usize, m: usize) -> String {
    let width = m.to_string().len().max(3);
    format!("imp_{i:0width$}")
}

/// Writes imputation `i` to `dir/imp_00i/` for `i = 1..=m`.
pub fn save_imputations(datasets: &[Dataset], dir: &Path) -> Result<Vec<PathBuf>> {
    let m = datasets.len();
    datasets
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let path = dir.join(imputation_dir_name(i + 1, m));
            save_dataset(d, &path)?;
            Ok(path)
        })
        .collect()
}
