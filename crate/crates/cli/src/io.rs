//! Flat-file formats.
//!
//! A dataset on disk is five files, usually side by side in one directory:
//!
//! * `students.csv`: `id,exit_status,exit_term,n1_<name>...,n2_<name>...`.
//!   `exit_status` is `GRADUATED`, `DROPPED` or `ENROLLED`; `exit_term` is
//!   empty for enrolled students. Empty feature cells are missing values.
//! * `trajectories.csv`: `id,term,course_id,outcome,credits[,regular]`, one
//!   row per enrollment. A term without enrollments is a row with an empty
//!   `course_id`. `regular` repeats the end-of-term regularity status on
//!   every row of the term and defaults to `true` when the column is absent.
//! * `shocks.csv`: `term,inflation_rate,strike_fraction` for terms 1, 2, ...
//! * `registry.json`: array of `{name, window, term?, kind}` entries for the
//!   N1/N2 features.
//! * `curriculum.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cohortlab_core::curriculum::{Curriculum, CurriculumSpec};
use cohortlab_core::temporal::{
    CourseOutcome, Dataset, ExitStatus, FeatureDescriptor, FeatureKind, FeatureRegistry, ObservationWindow, ShockSeries,
    ShockTerm, StudentRecord, TermSnapshot, Value,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const STUDENTS: &str = "students.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const SHOCKS: &str = "shocks.csv";
pub const REGISTRY: &str = "registry.json";
pub const CURRICULUM: &str = "curriculum.json";

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("values serialize to JSON");
    out.push(b'\n');
    out
}

pub fn load_curriculum(path: &Path) -> Result<Curriculum, CliError> {
    let spec: CurriculumSpec = read_json(path)?;
    Curriculum::from_spec(spec).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load_registry(path: &Path) -> Result<FeatureRegistry, CliError> {
    let list: Vec<FeatureDescriptor> = read_json(path)?;
    Ok(FeatureRegistry::from_descriptors(list)?)
}

pub fn registry_bytes(registry: &FeatureRegistry) -> Vec<u8> {
    to_json_bytes(registry)
}

fn format_value(v: &Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Num(x) => x.to_string(),
        Value::Text(s) => s.clone(),
    }
}

fn parse_value(cell: &str, kind: Option<FeatureKind>) -> Result<Value, String> {
    let as_bool = || match cell {
        "true" | "TRUE" | "1" => Some(true),
        "false" | "FALSE" | "0" => Some(false),
        _ => None,
    };
    match kind {
        Some(FeatureKind::Boolean) => as_bool().map(Value::Bool).ok_or_else(|| format!("`{cell}` is not a boolean")),
        Some(FeatureKind::Numeric) => cell
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Value::Num)
            .ok_or_else(|| format!("`{cell}` is not a finite number")),
        Some(FeatureKind::Categorical) => Ok(Value::Text(cell.to_string())),
        None => Ok(match (cell, cell.parse::<f64>()) {
            ("true" | "false", _) => Value::Bool(cell == "true"),
            (_, Ok(x)) if x.is_finite() => Value::Num(x),
            _ => Value::Text(cell.to_string()),
        }),
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory writer")
}

/// Students CSV; feature columns follow the registry's N1 then N2 order.
pub fn students_csv(records: &[StudentRecord], registry: &FeatureRegistry) -> Vec<u8> {
    let n1: Vec<&str> =
        registry.iter().filter(|d| d.window == ObservationWindow::PreEntry).map(|d| d.name.as_str()).collect();
    let n2: Vec<&str> = registry.iter().filter(|d| d.window == ObservationWindow::Entry).map(|d| d.name.as_str()).collect();
    let mut w = csv_writer();
    let mut header = vec!["id".to_string(), "exit_status".into(), "exit_term".into()];
    header.extend(n1.iter().map(|n| format!("n1_{n}")));
    header.extend(n2.iter().map(|n| format!("n2_{n}")));
    w.write_record(&header).expect("in-memory write");
    for r in records {
        let (status, term) = match r.exit {
            ExitStatus::Graduated(t) => ("GRADUATED", t.to_string()),
            ExitStatus::Dropped(t) => ("DROPPED", t.to_string()),
            ExitStatus::Enrolled => ("ENROLLED", String::new()),
        };
        let mut row = vec![r.id.clone(), status.into(), term];
        row.extend(n1.iter().map(|n| r.n1.get(*n).map(format_value).unwrap_or_default()));
        row.extend(n2.iter().map(|n| r.n2.get(*n).map(format_value).unwrap_or_default()));
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

/// Trajectory CSV. Per-row credits are the course's credits when passed.
pub fn trajectories_csv(records: &[StudentRecord], curriculum: &Curriculum) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(["id", "term", "course_id", "outcome", "credits", "regular"]).expect("in-memory write");
    for r in records {
        for s in &r.n3 {
            let term = s.term.to_string();
            let regular = s.regularity_status.to_string();
            if s.enrollments.is_empty() {
                w.write_record([r.id.as_str(), &term, "", "", "0", &regular]).expect("in-memory write");
            }
            for c in &s.enrollments {
                let outcome = s.outcomes.get(c).copied();
                let credits = match (outcome, curriculum.index_of(c)) {
                    (Some(CourseOutcome::Passed), Some(i)) => curriculum.course(i).credits,
                    _ => 0.0,
                };
                let outcome = outcome.map(CourseOutcome::as_str).unwrap_or("");
                w.write_record([r.id.as_str(), &term, c, outcome, &credits.to_string(), &regular]).expect("in-memory write");
            }
        }
    }
    finish(w)
}

pub fn shocks_csv(shocks: &ShockSeries) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(["term", "inflation_rate", "strike_fraction"]).expect("in-memory write");
    for (i, s) in shocks.terms.iter().enumerate() {
        w.write_record([(i + 1).to_string(), s.inflation_rate.to_string(), s.strike_fraction.to_string()])
            .expect("in-memory write");
    }
    finish(w)
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn schema(path: &Path, errors: Vec<String>) -> CliError {
    CliError::Schema { file: path.display().to_string(), errors }
}

/// Header index of every expected column; missing ones are reported.
fn columns(headers: &csv::StringRecord, required: &[&str], errors: &mut Vec<String>) -> BTreeMap<String, usize> {
    let map: BTreeMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
    for r in required {
        if !map.contains_key(*r) {
            errors.push(format!("line 1: missing column `{r}`"));
        }
    }
    map
}

pub fn read_shocks_csv(path: &Path) -> Result<ShockSeries, CliError> {
    let mut rdr = reader(path)?;
    let mut errors = Vec::new();
    let headers = rdr.headers().map_err(|e| schema(path, vec![e.to_string()]))?.clone();
    let cols = columns(&headers, &["term", "inflation_rate", "strike_fraction"], &mut errors);
    if !errors.is_empty() {
        return Err(schema(path, errors));
    }
    let mut terms = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let field = |name: &str| row.get(cols[name]).unwrap_or("");
        let term = field("term").parse::<u32>();
        let infl = field("inflation_rate").parse::<f64>();
        let strike = field("strike_fraction").parse::<f64>();
        match (term, infl, strike) {
            (Ok(t), Ok(inflation_rate), Ok(strike_fraction)) => {
                if t as usize != terms.len() + 1 {
                    errors.push(format!("line {line}: expected term {}, found {t}", terms.len() + 1));
                }
                terms.push(ShockTerm { inflation_rate, strike_fraction });
            }
            _ => errors.push(format!("line {line}: term must be an integer and rates numbers")),
        }
    }
    if !errors.is_empty() {
        return Err(schema(path, errors));
    }
    Ok(ShockSeries { terms })
}

struct StudentRow {
    exit: ExitStatus,
    n1: BTreeMap<String, Value>,
    n2: BTreeMap<String, Value>,
}

fn read_students(path: &Path, registry: &FeatureRegistry) -> Result<Vec<(String, StudentRow)>, CliError> {
    let mut rdr = reader(path)?;
    let mut errors = Vec::new();
    let headers = rdr.headers().map_err(|e| schema(path, vec![e.to_string()]))?.clone();
    let cols = columns(&headers, &["id", "exit_status", "exit_term"], &mut errors);
    let mut features = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(name) = h.strip_prefix("n1_") {
            features.push((i, name.to_string(), true));
        } else if let Some(name) = h.strip_prefix("n2_") {
            features.push((i, name.to_string(), false));
        } else if !matches!(h, "id" | "exit_status" | "exit_term") {
            errors.push(format!("line 1: unexpected column `{h}`"));
        }
    }
    if !errors.is_empty() {
        return Err(schema(path, errors));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let id = row.get(cols["id"]).unwrap_or("").to_string();
        if id.is_empty() {
            errors.push(format!("line {line}: empty id"));
            continue;
        }
        let term = row.get(cols["exit_term"]).unwrap_or("");
        let exit = match (row.get(cols["exit_status"]).unwrap_or(""), term.parse::<u32>()) {
            ("ENROLLED", _) if term.is_empty() => ExitStatus::Enrolled,
            ("GRADUATED", Ok(t)) => ExitStatus::Graduated(t),
            ("DROPPED", Ok(t)) => ExitStatus::Dropped(t),
            (s, _) => {
                errors.push(format!("line {line}: invalid exit `{s}` / `{term}`"));
                continue;
            }
        };
        let mut rec = StudentRow { exit, n1: BTreeMap::new(), n2: BTreeMap::new() };
        for (col, name, pre_entry) in &features {
            let cell = row.get(*col).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            match parse_value(cell, registry.get(name).map(|d| d.kind)) {
                Ok(v) if *pre_entry => {
                    rec.n1.insert(name.clone(), v);
                }
                Ok(v) => {
                    rec.n2.insert(name.clone(), v);
                }
                Err(e) => errors.push(format!("line {line}: column `{}`: {e}", if *pre_entry { "n1_" } else { "n2_" }.to_string() + name)),
            }
        }
        out.push((id, rec));
    }
    if !errors.is_empty() {
        return Err(schema(path, errors));
    }
    Ok(out)
}

#[derive(Default)]
struct TermRows {
    enrollments: Vec<String>,
    outcomes: BTreeMap<String, CourseOutcome>,
    credits: f64,
    regular: Option<bool>,
}

fn read_trajectories(path: &Path) -> Result<BTreeMap<String, BTreeMap<u32, TermRows>>, CliError> {
    let mut rdr = reader(path)?;
    let mut errors = Vec::new();
    let headers = rdr.headers().map_err(|e| schema(path, vec![e.to_string()]))?.clone();
    let cols = columns(&headers, &["id", "term", "course_id", "outcome", "credits"], &mut errors);
    if !errors.is_empty() {
        return Err(schema(path, errors));
    }
    let regular_col = cols.get("regular").copied();
    let mut out: BTreeMap<String, BTreeMap<u32, TermRows>> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let field = |name: &str| row.get(cols[name]).unwrap_or("");
        let id = field("id").to_string();
        let Ok(term) = field("term").parse::<u32>() else {
            errors.push(format!("line {line}: term `{}` is not a non-negative integer", field("term")));
            continue;
        };
        let Some(credits) = field("credits").parse::<f64>().ok().filter(|c| c.is_finite() && *c >= 0.0) else {
            errors.push(format!("line {line}: credits `{}` is not a non-negative number", field("credits")));
            continue;
        };
        let outcome = match field("outcome") {
            "" => None,
            s => match CourseOutcome::parse(s) {
                Some(o) => Some(o),
                None => {
                    errors.push(format!("line {line}: unknown outcome `{s}`"));
                    continue;
                }
            },
        };
        let regular = match regular_col.map(|c| row.get(c).unwrap_or("")) {
            None | Some("") => None,
            Some("true") => Some(true),
            Some("false") => Some(false),
            Some(s) => {
                errors.push(format!("line {line}: regular `{s}` is not a boolean"));
                continue;
            }
        };
        let course = field("course_id");
        let slot = out.entry(id.clone()).or_default().entry(term).or_default();
        if course.is_empty() {
            if outcome.is_some() || credits != 0.0 {
                errors.push(format!("line {line}: outcome or credits without a course"));
            }
        } else {
            if slot.enrollments.iter().any(|c| c == course) {
                errors.push(format!("line {line}: `{id}` enrolled twice in `{course}` in term {term}"));
                continue;
            }
            slot.enrollments.push(course.to_string());
            if let Some(o) = outcome {
                slot.outcomes.insert(course.to_string(), o);
            }
            slot.credits += credits;
        }
        match (slot.regular, regular) {
            (Some(a), Some(b)) if a != b => {
                errors.push(format!("line {line}: conflicting regularity for `{id}` in term {term}"));
            }
            (None, r) => slot.regular = r,
            _ => {}
        }
    }
    if !errors.is_empty() {
        return Err(schema(path, errors));
    }
    Ok(out)
}

/// Locations of the five dataset files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub students: PathBuf,
    pub trajectories: PathBuf,
    pub shocks: PathBuf,
    pub registry: PathBuf,
    pub curriculum: PathBuf,
}

impl DataPaths {
    /// The conventional file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            students: dir.join(STUDENTS),
            trajectories: dir.join(TRAJECTORIES),
            shocks: dir.join(SHOCKS),
            registry: dir.join(REGISTRY),
            curriculum: dir.join(CURRICULUM),
        }
    }

    pub fn relative_to(&self, base: &Path) -> Self {
        Self {
            students: base.join(&self.students),
            trajectories: base.join(&self.trajectories),
            shocks: base.join(&self.shocks),
            registry: base.join(&self.registry),
            curriculum: base.join(&self.curriculum),
        }
    }
}

/// Reads and validates a dataset. Parse errors carry CSV line numbers;
/// record-level problems come back from the dataset checks all at once.
pub fn ingest_dataset(paths: &DataPaths, curriculum: &Curriculum) -> Result<Dataset, CliError> {
    let registry = load_registry(&paths.registry)?;
    let shocks = read_shocks_csv(&paths.shocks)?;
    let students = read_students(&paths.students, &registry)?;
    let mut trajectories = read_trajectories(&paths.trajectories)?;
    let mut errors = Vec::new();
    let mut records = Vec::with_capacity(students.len());
    for (id, s) in students {
        let terms = trajectories.remove(&id).unwrap_or_default();
        let n3 = terms
            .into_iter()
            .map(|(term, rows)| TermSnapshot {
                term,
                enrollments: rows.enrollments,
                outcomes: rows.outcomes,
                credits_earned: rows.credits,
                regularity_status: rows.regular.unwrap_or(true),
                friction_index: 0.0,
            })
            .collect();
        records.push(StudentRecord { id, n1: s.n1, n2: s.n2, n3, exit: s.exit });
    }
    for id in trajectories.keys() {
        errors.push(format!("trajectory rows for `{id}`, who is not in the students file"));
    }
    if !errors.is_empty() {
        return Err(schema(&paths.trajectories, errors));
    }
    Dataset::new(registry, records, shocks, curriculum)
        .map_err(|e| CliError::dataset(paths.students.display().to_string(), e))
}

/// Every file of a dataset, keyed by its conventional name.
pub fn dataset_files(dataset: &Dataset, curriculum: &Curriculum) -> Vec<(&'static str, Vec<u8>)> {
    let registry = dataset.base_registry();
    vec![
        (STUDENTS, students_csv(dataset.records(), &registry)),
        (TRAJECTORIES, trajectories_csv(dataset.records(), curriculum)),
        (SHOCKS, shocks_csv(dataset.shocks())),
        (REGISTRY, registry_bytes(&registry)),
        (CURRICULUM, to_json_bytes(curriculum)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_parse_by_registry_kind() {
        assert_eq!(parse_value("1", Some(FeatureKind::Boolean)), Ok(Value::Bool(true)));
        assert_eq!(parse_value("1", Some(FeatureKind::Numeric)), Ok(Value::Num(1.0)));
        assert_eq!(parse_value("1", Some(FeatureKind::Categorical)), Ok(Value::Text("1".into())));
        assert!(parse_value("x", Some(FeatureKind::Numeric)).is_err());
        assert_eq!(parse_value("0.25", None), Ok(Value::Num(0.25)));
    }

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, -2.5e-7, 12345.678] {
            assert_eq!(format_value(&Value::Num(x)).parse::<f64>().unwrap(), x);
        }
    }
}
