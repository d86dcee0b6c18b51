//! Time-ordered feature store.
//!
//! Every feature is registered with the observation window in which it first
//! becomes known: pre-entry (N1), entry (N2), a trajectory term (N3(t)) or the
//! external context of a term (N4(t)). Views and model inputs are filtered
//! against a decision point so nothing observed later can leak into an
//! analysis. Context for term `t` is treated as observable during term `t`,
//! i.e. N4(t) ranks equal to N3(t).
//!
//! Per-term trajectory features (credits, friction, regularity, exit flags)
//! and context features (inflation, strikes) are derived here, registered as
//! N3(t)/N4(t) features, and are the only way consumers see trajectory data.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{course_status_at, friction_from_status, Curriculum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "WindowSpec", try_from = "WindowSpec")]
pub enum ObservationWindow {
    PreEntry,
    Entry,
    Term(u32),
    Context(u32),
}

impl ObservationWindow {
    /// Position in the observation order; equal keys are simultaneous.
    pub fn time_key(self) -> (u8, u32) {
        match self {
            ObservationWindow::PreEntry => (0, 0),
            ObservationWindow::Entry => (1, 0),
            ObservationWindow::Term(t) | ObservationWindow::Context(t) => (2, t),
        }
    }

    pub fn cmp_time(self, other: ObservationWindow) -> Ordering {
        self.time_key().cmp(&other.time_key())
    }

    /// True when a feature in `self` is known at decision point `point`.
    pub fn visible_at(self, point: ObservationWindow) -> bool {
        self.cmp_time(point) != Ordering::Greater
    }

    /// Trajectory term reached at this point (0 before the first term).
    pub fn term(self) -> u32 {
        self.time_key().1
    }

    pub fn validate(self) -> Result<(), TemporalError> {
        match self {
            ObservationWindow::Term(0) | ObservationWindow::Context(0) => Err(TemporalError::InvalidWindow(self)),
            _ => Ok(()),
        }
    }

    fn level(self) -> Level {
        match self {
            ObservationWindow::PreEntry => Level::N1PreEntry,
            ObservationWindow::Entry => Level::N2Entry,
            ObservationWindow::Term(_) => Level::N3Term,
            ObservationWindow::Context(_) => Level::N4Context,
        }
    }
}

impl fmt::Display for ObservationWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservationWindow::PreEntry => f.write_str("N1"),
            ObservationWindow::Entry => f.write_str("N2"),
            ObservationWindow::Term(t) => write!(f, "N3({t})"),
            ObservationWindow::Context(t) => write!(f, "N4({t})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum Level {
    #[serde(rename = "N1_PRE_ENTRY")]
    N1PreEntry,
    #[serde(rename = "N2_ENTRY")]
    N2Entry,
    #[serde(rename = "N3_TERM")]
    N3Term,
    #[serde(rename = "N4_CONTEXT")]
    N4Context,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct WindowSpec {
    window: Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    term: Option<u32>,
}

impl From<ObservationWindow> for WindowSpec {
    fn from(w: ObservationWindow) -> Self {
        let term = match w {
            ObservationWindow::Term(t) | ObservationWindow::Context(t) => Some(t),
            _ => None,
        };
        WindowSpec { window: w.level(), term }
    }
}

impl TryFrom<WindowSpec> for ObservationWindow {
    type Error = String;

    fn try_from(s: WindowSpec) -> Result<Self, Self::Error> {
        let w = match (s.window, s.term) {
            (Level::N1PreEntry, None) => ObservationWindow::PreEntry,
            (Level::N2Entry, None) => ObservationWindow::Entry,
            (Level::N3Term, Some(t)) => ObservationWindow::Term(t),
            (Level::N4Context, Some(t)) => ObservationWindow::Context(t),
            (l, Some(_)) => return Err(format!("{l:?} windows take no term")),
            (l, None) => return Err(format!("{l:?} windows need a term")),
        };
        w.validate().map_err(|e| e.to_string())?;
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
    Boolean,
}

/// A cell value. Missing cells are `None` at the use site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Num(f64),
    Text(String),
}

impl Value {
    pub fn kind(&self) -> FeatureKind {
        match self {
            Value::Bool(_) => FeatureKind::Boolean,
            Value::Num(_) => FeatureKind::Numeric,
            Value::Text(_) => FeatureKind::Categorical,
        }
    }

    /// Numeric reading: numbers as-is, booleans as 0/1, categories none.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            Value::Text(_) => None,
        }
    }
}

/// Registry JSON element: `{name, window, term?, kind}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    #[serde(flatten)]
    pub window: ObservationWindow,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TemporalError {
    #[error("feature `{0}` is already registered")]
    DuplicateFeature(String),
    #[error("invalid observation window {0}: term index must be positive")]
    InvalidWindow(ObservationWindow),
    #[error("feature `{0}` is not registered")]
    UnregisteredFeature(String),
    #[error("temporal leakage at decision point {point}: {}", describe(.offenders))]
    LeakageViolation { point: ObservationWindow, offenders: Vec<(String, ObservationWindow)> },
}

fn describe(offenders: &[(String, ObservationWindow)]) -> String {
    let parts: Vec<String> = offenders.iter().map(|(n, w)| format!("{n} observed at {w}")).collect();
    parts.join(", ")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct FeatureRegistry {
    features: Vec<FeatureDescriptor>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl FeatureRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_descriptors(list: Vec<FeatureDescriptor>) -> Result<Self, TemporalError> {
        let mut r = Self::new();
        for d in list {
            r.register(d.name, d.window, d.kind)?;
        }
        Ok(r)
    }

    /// Registers a feature; its window is fixed from here on.
    pub fn register(
        &mut self,
        name: impl Into<String>,
        window: ObservationWindow,
        kind: FeatureKind,
    ) -> Result<FeatureDescriptor, TemporalError> {
        let name = name.into();
        window.validate()?;
        if self.index.contains_key(&name) {
            return Err(TemporalError::DuplicateFeature(name));
        }
        let d = FeatureDescriptor { name: name.clone(), window, kind };
        self.index.insert(name, self.features.len());
        self.features.push(d.clone());
        Ok(d)
    }

    pub fn get(&self, name: &str) -> Option<&FeatureDescriptor> {
        self.index.get(name).map(|&i| &self.features[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureDescriptor> {
        self.features.iter()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    fn rebuild_index(&mut self) {
        self.index = self.features.iter().enumerate().map(|(i, d)| (d.name.clone(), i)).collect();
    }
}

/// Fails unless every input is registered and observable at `point`.
/// Reports every offending feature, not just the first.
pub fn assert_no_leakage<S: AsRef<str>>(
    inputs: &[S],
    point: ObservationWindow,
    registry: &FeatureRegistry,
) -> Result<(), TemporalError> {
    let mut offenders = Vec::new();
    for name in inputs {
        let name = name.as_ref();
        let d = registry.get(name).ok_or_else(|| TemporalError::UnregisteredFeature(name.to_string()))?;
        if !d.window.visible_at(point) {
            offenders.push((d.name.clone(), d.window));
        }
    }
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(TemporalError::LeakageViolation { point, offenders })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CourseOutcome {
    Passed,
    Regularized,
    Failed,
    Withdrawn,
}

impl CourseOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            CourseOutcome::Passed => "PASSED",
            CourseOutcome::Regularized => "REGULARIZED",
            CourseOutcome::Failed => "FAILED",
            CourseOutcome::Withdrawn => "WITHDRAWN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "PASSED" => CourseOutcome::Passed,
            "REGULARIZED" => CourseOutcome::Regularized,
            "FAILED" => CourseOutcome::Failed,
            "WITHDRAWN" => CourseOutcome::Withdrawn,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSnapshot {
    pub term: u32,
    pub enrollments: Vec<String>,
    pub outcomes: BTreeMap<String, CourseOutcome>,
    pub credits_earned: f64,
    pub regularity_status: bool,
    pub friction_index: f64,
}

impl TermSnapshot {
    pub fn empty(term: u32) -> Self {
        Self {
            term,
            enrollments: Vec::new(),
            outcomes: BTreeMap::new(),
            credits_earned: 0.0,
            regularity_status: true,
            friction_index: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE", tag = "status", content = "term")]
pub enum ExitStatus {
    Graduated(u32),
    Dropped(u32),
    Enrolled,
}

impl ExitStatus {
    pub fn term(self) -> Option<u32> {
        match self {
            ExitStatus::Graduated(t) | ExitStatus::Dropped(t) => Some(t),
            ExitStatus::Enrolled => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentRecord {
    pub id: String,
    pub n1: BTreeMap<String, Value>,
    pub n2: BTreeMap<String, Value>,
    pub n3: Vec<TermSnapshot>,
    pub exit: ExitStatus,
}

impl StudentRecord {
    pub fn last_term(&self) -> u32 {
        self.n3.last().map_or(0, |s| s.term)
    }

    pub fn snapshot(&self, term: u32) -> Option<&TermSnapshot> {
        let i = term.checked_sub(1)? as usize;
        self.n3.get(i).filter(|s| s.term == term)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockTerm {
    pub inflation_rate: f64,
    pub strike_fraction: f64,
}

/// Macro context per term; index 0 is term 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShockSeries {
    pub terms: Vec<ShockTerm>,
}

impl ShockSeries {
    pub fn constant(terms: u32, inflation_rate: f64, strike_fraction: f64) -> Self {
        Self { terms: alloc::vec![ShockTerm { inflation_rate, strike_fraction }; terms as usize] }
    }

    pub fn len(&self) -> u32 {
        self.terms.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: u32) -> Option<ShockTerm> {
        self.terms.get(term.checked_sub(1)? as usize).copied()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        for (i, s) in self.terms.iter().enumerate() {
            let ok = s.inflation_rate.is_finite()
                && s.inflation_rate >= -1.0
                && (0.0..=1.0).contains(&s.strike_fraction);
            if !ok {
                return Err(DatasetError::InvalidShock { term: i as u32 + 1 });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Registry(#[from] TemporalError),
    #[error("duplicate student id `{0}`")]
    DuplicateStudent(String),
    #[error("student `{student}`: feature `{feature}` is not registered")]
    UnknownFeature { student: String, feature: String },
    #[error("student `{student}`: feature `{feature}` is registered at {registered}, not {found}")]
    WindowMismatch { student: String, feature: String, registered: ObservationWindow, found: ObservationWindow },
    #[error("student `{student}`: feature `{feature}` expects a {expected:?} value")]
    KindMismatch { student: String, feature: String, expected: FeatureKind },
    #[error("student `{student}`: unknown course `{course}`")]
    UnknownCourse { student: String, course: String },
    #[error("student `{0}`: terms must run 1, 2, 3, ... without gaps")]
    NonMonotoneTerms(String),
    #[error("student `{0}`: snapshot after the exit term")]
    SnapshotAfterExit(String),
    #[error("student `{student}`, term {term}: outcome for `{course}` without an enrollment")]
    OutcomeWithoutEnrollment { student: String, term: u32, course: String },
    #[error("student `{student}`, term {term}: {reason}")]
    InvalidSnapshot { student: String, term: u32, reason: &'static str },
    #[error("shock series has no entry for term {0}")]
    ShocksMissingTerm(u32),
    #[error("shock entry for term {term} is out of range")]
    InvalidShock { term: u32 },
}

/// Derived per-term feature families.
pub mod derived {
    /// N3(t): credits earned in term t.
    pub const CREDITS: &str = "credits";
    /// N3(t): credits accumulated through term t.
    pub const CUM_CREDITS: &str = "cum_credits";
    /// N3(t): accumulated credits divided by t.
    pub const CREDIT_VELOCITY: &str = "credit_velocity";
    /// N3(t): failed or withdrawn attempts in term t.
    pub const FAILED: &str = "failed";
    /// N3(t): friction index at the end of term t.
    pub const FRICTION: &str = "friction";
    /// N3(t): regularity status at the end of term t.
    pub const REGULAR: &str = "regular";
    /// N3(t): dropped out in or before term t.
    pub const DROPOUT: &str = "dropout";
    /// N3(t): graduated in or before term t.
    pub const GRADUATED: &str = "graduated";
    /// N4(t): inflation rate of term t.
    pub const INFLATION: &str = "inflation";
    /// N4(t): fraction of instructional days lost to strikes in term t.
    pub const STRIKE: &str = "strike";

    pub const TRAJECTORY: [&str; 8] = [CREDITS, CUM_CREDITS, CREDIT_VELOCITY, FAILED, FRICTION, REGULAR, DROPOUT, GRADUATED];
    pub const CONTEXT: [&str; 2] = [INFLATION, STRIKE];

    pub fn name(family: &str, term: u32) -> alloc::string::String {
        alloc::format!("{family}_t{term}")
    }
}

fn derived_kind(family: &str) -> FeatureKind {
    match family {
        derived::REGULAR | derived::DROPOUT | derived::GRADUATED => FeatureKind::Boolean,
        _ => FeatureKind::Numeric,
    }
}

/// Validated, immutable collection of records plus the feature registry and
/// macro context they were observed under.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    registry: FeatureRegistry,
    records: Vec<StudentRecord>,
    shocks: ShockSeries,
    curriculum_ref: String,
    horizon: u32,
}

impl Dataset {
    /// Checks every record against `registry` and `curriculum`, recomputes
    /// per-term credits and friction, and registers the derived N3/N4
    /// features for terms `1..=horizon`, where the horizon is the longer of
    /// the shock series and the longest trajectory. All problems found are
    /// returned together.
    pub fn new(
        registry: FeatureRegistry,
        mut records: Vec<StudentRecord>,
        shocks: ShockSeries,
        curriculum: &Curriculum,
    ) -> Result<Self, Vec<DatasetError>> {
        let mut errors = Vec::new();
        if let Err(e) = shocks.validate() {
            errors.push(e);
        }
        let mut ids = BTreeSet::new();
        for r in &mut records {
            if !ids.insert(r.id.clone()) {
                errors.push(DatasetError::DuplicateStudent(r.id.clone()));
            }
            validate_record(r, &registry, curriculum, &mut errors);
        }
        let horizon = records.iter().map(StudentRecord::last_term).max().unwrap_or(0).max(shocks.len());
        for t in 1..=records.iter().map(StudentRecord::last_term).max().unwrap_or(0) {
            if shocks.get(t).is_none() {
                errors.push(DatasetError::ShocksMissingTerm(t));
                break;
            }
        }
        let mut registry = registry;
        registry.rebuild_index();
        if errors.is_empty() {
            for t in 1..=horizon {
                for family in derived::TRAJECTORY {
                    if let Err(e) = registry.register(derived::name(family, t), ObservationWindow::Term(t), derived_kind(family)) {
                        errors.push(e.into());
                    }
                }
                for family in derived::CONTEXT {
                    if let Err(e) = registry.register(derived::name(family, t), ObservationWindow::Context(t), FeatureKind::Numeric) {
                        errors.push(e.into());
                    }
                }
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        Ok(Self { registry, records, shocks, curriculum_ref: curriculum.reference(), horizon })
    }

    pub fn registry(&self) -> &FeatureRegistry {
        &self.registry
    }

    /// The registry without derived features, as supplied at construction.
    pub fn base_registry(&self) -> FeatureRegistry {
        let mut r = FeatureRegistry::new();
        for d in self.registry.iter().filter(|d| matches!(d.window, ObservationWindow::PreEntry | ObservationWindow::Entry)) {
            r.register(d.name.clone(), d.window, d.kind).expect("names were unique");
        }
        r
    }

    pub fn records(&self) -> &[StudentRecord] {
        &self.records
    }

    pub fn shocks(&self) -> &ShockSeries {
        &self.shocks
    }

    pub fn curriculum_ref(&self) -> &str {
        &self.curriculum_ref
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Value of a registered feature for one record. `None` means missing.
    pub fn value(&self, record: &StudentRecord, feature: &FeatureDescriptor) -> Option<Value> {
        match feature.window {
            ObservationWindow::PreEntry => record.n1.get(&feature.name).cloned(),
            ObservationWindow::Entry => record.n2.get(&feature.name).cloned(),
            ObservationWindow::Term(t) => {
                let family = feature.name.strip_suffix(&alloc::format!("_t{t}"))?;
                trajectory_value(record, family, t)
            }
            ObservationWindow::Context(t) => {
                let s = self.shocks.get(t)?;
                match feature.name.strip_suffix(&alloc::format!("_t{t}"))? {
                    derived::INFLATION => Some(Value::Num(s.inflation_rate)),
                    derived::STRIKE => Some(Value::Num(s.strike_fraction)),
                    _ => None,
                }
            }
        }
    }

    /// One row per student, one column per feature visible at `point`.
    pub fn view_as_of(&self, point: ObservationWindow) -> FeatureMatrix {
        let columns: Vec<FeatureDescriptor> =
            self.registry.iter().filter(|d| d.window.visible_at(point)).cloned().collect();
        let rows = self
            .records
            .iter()
            .map(|r| columns.iter().map(|c| self.value(r, c)).collect())
            .collect();
        FeatureMatrix { point, columns, ids: self.records.iter().map(|r| r.id.clone()).collect(), rows }
    }
}

fn trajectory_value(record: &StudentRecord, family: &str, t: u32) -> Option<Value> {
    let exited_by = |want: fn(ExitStatus) -> Option<u32>| -> Option<Value> {
        match want(record.exit) {
            Some(e) if e <= t => Some(Value::Bool(true)),
            _ if record.last_term() >= t || record.exit != ExitStatus::Enrolled => Some(Value::Bool(false)),
            _ => None,
        }
    };
    match family {
        derived::DROPOUT => {
            return exited_by(|e| match e {
                ExitStatus::Dropped(t) => Some(t),
                _ => None,
            })
        }
        derived::GRADUATED => {
            return exited_by(|e| match e {
                ExitStatus::Graduated(t) => Some(t),
                _ => None,
            })
        }
        _ => {}
    }
    let snap = record.snapshot(t)?;
    Some(match family {
        derived::CREDITS => Value::Num(snap.credits_earned),
        derived::CUM_CREDITS => Value::Num(cumulative_credits(record, t)),
        derived::CREDIT_VELOCITY => Value::Num(cumulative_credits(record, t) / t as f64),
        derived::FAILED => Value::Num(
            snap.outcomes.values().filter(|o| matches!(o, CourseOutcome::Failed | CourseOutcome::Withdrawn)).count()
                as f64,
        ),
        derived::FRICTION => Value::Num(snap.friction_index),
        derived::REGULAR => Value::Bool(snap.regularity_status),
        _ => return None,
    })
}

fn cumulative_credits(record: &StudentRecord, t: u32) -> f64 {
    record.n3.iter().take_while(|s| s.term <= t).map(|s| s.credits_earned).sum()
}

fn validate_record(r: &mut StudentRecord, registry: &FeatureRegistry, cur: &Curriculum, errors: &mut Vec<DatasetError>) {
    for (map, window) in [(&r.n1, ObservationWindow::PreEntry), (&r.n2, ObservationWindow::Entry)] {
        for (name, value) in map {
            match registry.get(name) {
                None => errors.push(DatasetError::UnknownFeature { student: r.id.clone(), feature: name.clone() }),
                Some(d) if d.window != window => errors.push(DatasetError::WindowMismatch {
                    student: r.id.clone(),
                    feature: name.clone(),
                    registered: d.window,
                    found: window,
                }),
                Some(d) if d.kind != value.kind() => errors.push(DatasetError::KindMismatch {
                    student: r.id.clone(),
                    feature: name.clone(),
                    expected: d.kind,
                }),
                Some(_) => {}
            }
        }
    }
    if r.n3.iter().enumerate().any(|(i, s)| s.term != i as u32 + 1) {
        errors.push(DatasetError::NonMonotoneTerms(r.id.clone()));
        return;
    }
    if let Some(exit) = r.exit.term() {
        if exit == 0 || r.last_term() > exit {
            errors.push(DatasetError::SnapshotAfterExit(r.id.clone()));
            return;
        }
    }
    let before = errors.len();
    let mut enrolled_so_far = BTreeSet::new();
    for s in &r.n3 {
        for c in &s.enrollments {
            if cur.index_of(c).is_none() {
                errors.push(DatasetError::UnknownCourse { student: r.id.clone(), course: c.clone() });
            }
            enrolled_so_far.insert(c.clone());
        }
        for c in s.outcomes.keys() {
            if !enrolled_so_far.contains(c) {
                errors.push(DatasetError::OutcomeWithoutEnrollment { student: r.id.clone(), term: s.term, course: c.clone() });
            }
        }
        if !(0.0..=1.0).contains(&s.friction_index) {
            errors.push(DatasetError::InvalidSnapshot { student: r.id.clone(), term: s.term, reason: "friction_index outside [0, 1]" });
        }
        if !(s.credits_earned.is_finite() && s.credits_earned >= 0.0) {
            errors.push(DatasetError::InvalidSnapshot { student: r.id.clone(), term: s.term, reason: "negative credits" });
        }
    }
    if errors.len() != before {
        return;
    }
    // Friction is always recomputed so every consumer sees the same definition.
    for t in 1..=r.last_term() {
        let status = course_status_at(r, cur, t).expect("validated above");
        r.n3[t as usize - 1].friction_index = friction_from_status(cur, &status);
    }
}

/// Rows of possibly-missing values, one column per visible feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub point: ObservationWindow,
    pub columns: Vec<FeatureDescriptor>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<Option<Value>>>,
}

impl FeatureMatrix {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn numeric(&self, row: usize, col: usize) -> Option<f64> {
        self.rows[row][col].as_ref().and_then(Value::as_f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::test_support::graph;
    use alloc::vec;
    use ObservationWindow::*;

    fn registry() -> FeatureRegistry {
        let mut r = FeatureRegistry::new();
        r.register("ses_index", PreEntry, FeatureKind::Numeric).unwrap();
        r.register("diagnostic_score", Entry, FeatureKind::Numeric).unwrap();
        r
    }

    fn record(id: &str, terms: u32, exit: ExitStatus) -> StudentRecord {
        let mut n1 = BTreeMap::new();
        n1.insert("ses_index".to_string(), Value::Num(0.5));
        let mut n2 = BTreeMap::new();
        n2.insert("diagnostic_score".to_string(), Value::Num(1.0));
        let n3 = (1..=terms)
            .map(|t| {
                let mut s = TermSnapshot::empty(t);
                let c = ["A", "B", "C"][(t as usize - 1) % 3].to_string();
                s.enrollments.push(c.clone());
                s.outcomes.insert(c, CourseOutcome::Passed);
                s.credits_earned = 6.0;
                s
            })
            .collect();
        StudentRecord { id: id.into(), n1, n2, n3, exit }
    }

    fn dataset() -> Dataset {
        let cur = graph(&["A", "B", "C"], &[("A", "B"), ("B", "C")]);
        Dataset::new(
            registry(),
            vec![record("s1", 3, ExitStatus::Graduated(3)), record("s2", 1, ExitStatus::Dropped(1))],
            ShockSeries::constant(3, 0.1, 0.0),
            &cur,
        )
        .unwrap()
    }

    #[test]
    fn window_order() {
        assert!(PreEntry.visible_at(Entry));
        assert!(!Entry.visible_at(PreEntry));
        assert!(Context(1).visible_at(Term(1)));
        assert!(Term(1).visible_at(Context(1)));
        assert!(!Term(2).visible_at(Context(1)));
        assert!(Entry.visible_at(Term(1)));
    }

    #[test]
    fn registration() {
        let mut r = FeatureRegistry::new();
        let d = r.register("ses_index", PreEntry, FeatureKind::Numeric).unwrap();
        assert_eq!(d.window, PreEntry);
        assert_eq!(r.register("diagnostic_score", Entry, FeatureKind::Numeric).unwrap().window, Entry);
        assert_eq!(
            r.register("ses_index", PreEntry, FeatureKind::Numeric),
            Err(TemporalError::DuplicateFeature("ses_index".into()))
        );
        assert_eq!(r.register("x", Term(0), FeatureKind::Numeric), Err(TemporalError::InvalidWindow(Term(0))));
    }

    #[test]
    fn registry_json_shape() {
        let json = r#"[{"name":"ses_index","window":"N1_PRE_ENTRY","kind":"numeric"},
                       {"name":"gpa_t3","window":"N3_TERM","term":3,"kind":"numeric"}]"#;
        let list: Vec<FeatureDescriptor> = serde_json::from_str(json).unwrap();
        assert_eq!(list[1].window, Term(3));
        let out = serde_json::to_string(&list[0]).unwrap();
        assert_eq!(out, r#"{"name":"ses_index","window":"N1_PRE_ENTRY","kind":"numeric"}"#);
        let bad = r#"[{"name":"x","window":"N3_TERM","kind":"numeric"}]"#;
        assert!(serde_json::from_str::<Vec<FeatureDescriptor>>(bad).is_err());
    }

    #[test]
    fn leakage_guard() {
        let mut r = registry();
        r.register("term3_gpa", Term(3), FeatureKind::Numeric).unwrap();
        r.register("inflation_t1", Context(1), FeatureKind::Numeric).unwrap();
        assert!(assert_no_leakage(&["ses_index"], Entry, &r).is_ok());
        let err = assert_no_leakage(&["ses_index", "term3_gpa"], Entry, &r).unwrap_err();
        assert_eq!(err, TemporalError::LeakageViolation { point: Entry, offenders: vec![("term3_gpa".into(), Term(3))] });
        assert!(assert_no_leakage(&["inflation_t1"], Term(1), &r).is_ok());
        assert!(matches!(assert_no_leakage(&["nope"], Term(1), &r), Err(TemporalError::UnregisteredFeature(_))));
    }

    #[test]
    fn view_filters_columns() {
        let d = dataset();
        let v = d.view_as_of(Entry);
        assert_eq!(v.column_names(), vec!["ses_index", "diagnostic_score"]);
        let v = d.view_as_of(Term(2));
        assert!(v.column_index("cum_credits_t2").is_some());
        assert!(v.column_index("inflation_t2").is_some());
        assert!(v.column_index("cum_credits_t3").is_none());
        let s2 = 1;
        // s2 dropped in term 1: later trajectory cells are missing, exit flags are known.
        assert_eq!(v.rows[s2][v.column_index("cum_credits_t2").unwrap()], None);
        assert_eq!(v.rows[s2][v.column_index("dropout_t2").unwrap()], Some(Value::Bool(true)));
        assert_eq!(v.numeric(0, v.column_index("cum_credits_t2").unwrap()), Some(12.0));
        assert_eq!(v.numeric(0, v.column_index("credit_velocity_t2").unwrap()), Some(6.0));
    }

    #[test]
    fn only_trajectory_features_at_pre_entry_is_empty() {
        let cur = graph(&["A", "B", "C"], &[]);
        let mut rec = record("s", 2, ExitStatus::Enrolled);
        rec.n1.clear();
        rec.n2.clear();
        let d = Dataset::new(FeatureRegistry::new(), vec![rec], ShockSeries::constant(2, 0.0, 0.0), &cur).unwrap();
        let v = d.view_as_of(PreEntry);
        assert!(v.columns.is_empty());
        assert_eq!(v.rows, vec![Vec::new()]);
    }

    #[test]
    fn censored_exit_flags_are_missing() {
        let cur = graph(&["A", "B", "C"], &[]);
        let d = Dataset::new(registry(), vec![record("s", 1, ExitStatus::Enrolled)], ShockSeries::constant(3, 0.0, 0.0), &cur)
            .unwrap();
        let v = d.view_as_of(Term(3));
        assert_eq!(v.rows[0][v.column_index("dropout_t1").unwrap()], Some(Value::Bool(false)));
        assert_eq!(v.rows[0][v.column_index("dropout_t3").unwrap()], None);
    }

    #[test]
    fn rejects_gaps_and_unknown_courses() {
        let cur = graph(&["A", "B", "C"], &[]);
        let mut gap = record("gap", 3, ExitStatus::Enrolled);
        gap.n3.remove(1);
        let mut z9 = record("z9", 1, ExitStatus::Enrolled);
        z9.n3[0].enrollments.push("Z9".into());
        let errs = Dataset::new(registry(), vec![gap, z9], ShockSeries::constant(3, 0.0, 0.0), &cur).unwrap_err();
        assert!(errs.contains(&DatasetError::NonMonotoneTerms("gap".into())));
        assert!(errs.contains(&DatasetError::UnknownCourse { student: "z9".into(), course: "Z9".into() }));
    }

    #[test]
    fn rejects_snapshots_after_exit_and_bad_features() {
        let cur = graph(&["A", "B", "C"], &[]);
        let late = record("late", 3, ExitStatus::Dropped(2));
        let mut wrong = record("wrong", 1, ExitStatus::Enrolled);
        wrong.n2.insert("ses_index".into(), Value::Num(1.0));
        wrong.n1.insert("mystery".into(), Value::Num(1.0));
        let mut kind = record("kind", 1, ExitStatus::Enrolled);
        kind.n1.insert("ses_index".into(), Value::Text("high".into()));
        let errs = Dataset::new(registry(), vec![late, wrong, kind], ShockSeries::constant(3, 0.0, 0.0), &cur).unwrap_err();
        assert!(errs.contains(&DatasetError::SnapshotAfterExit("late".into())));
        assert!(errs.iter().any(|e| matches!(e, DatasetError::WindowMismatch { .. })));
        assert!(errs.iter().any(|e| matches!(e, DatasetError::UnknownFeature { .. })));
        assert!(errs.iter().any(|e| matches!(e, DatasetError::KindMismatch { .. })));
    }

    #[test]
    fn shocks_must_cover_trajectories() {
        let cur = graph(&["A", "B", "C"], &[]);
        let errs = Dataset::new(registry(), vec![record("s", 3, ExitStatus::Enrolled)], ShockSeries::constant(2, 0.0, 0.0), &cur)
            .unwrap_err();
        assert_eq!(errs, vec![DatasetError::ShocksMissingTerm(3)]);
    }

    #[test]
    fn friction_is_recomputed() {
        let cur = graph(&["A", "B", "C"], &[("A", "B")]);
        let mut r = record("s", 1, ExitStatus::Enrolled);
        r.n3[0].outcomes.insert("A".into(), CourseOutcome::Failed);
        r.n3[0].friction_index = 0.9;
        let d = Dataset::new(registry(), vec![r], ShockSeries::constant(1, 0.0, 0.0), &cur).unwrap();
        assert_eq!(d.records()[0].n3[0].friction_index, 1.0);
    }
}
