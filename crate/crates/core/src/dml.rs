//! Cross-fitted double machine learning for the partially linear model
//! `Y = θ·T + g(X) + ε`, with ridge nuisance learners.
//!
//! Rows are processed in id order and folds are assigned from a seeded hash
//! of the id, so estimates do not depend on input row order.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cholesky, cholesky_solve, Matrix};
use crate::math::sqrt;
use crate::rng::stable_hash;
use crate::temporal::{assert_no_leakage, Dataset, FeatureKind, ObservationWindow, TemporalError};

const PIVOT_TOL: f64 = 1e-12;
const MIN_ROWS_PER_FOLD: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DmlError {
    #[error(transparent)]
    Leakage(#[from] TemporalError),
    #[error("insufficient data: {n} complete rows, at least {required} needed")]
    InsufficientData { n: usize, required: usize },
    #[error("treatment has no residual variation after partialling out controls")]
    ZeroTreatmentVariation,
    #[error("singular normal equations (ridge_lambda = 0 with rank-deficient design)")]
    SingularSystem,
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("student {0} has no group")]
    MissingGroup(String),
    #[error("group {group}: {source}")]
    Group { group: String, source: Box<DmlError> },
}

/// Extra nuisance-learner columns built from the controls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    Square(String),
    Interaction(String, String),
    AllSquares,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub ridge_lambda: f64,
    #[serde(default = "default_true")]
    pub intercept: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expansions: Vec<Expansion>,
}

impl LearnerParams {
    pub fn ridge(lambda: f64) -> Self {
        Self { ridge_lambda: lambda, intercept: true, expansions: Vec::new() }
    }

    fn validate(&self) -> Result<(), DmlError> {
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(DmlError::InvalidSpec(format!("ridge_lambda must be finite and >= 0, got {}", self.ridge_lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl RidgeModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>()
    }
}

/// Ridge regression solving `(XᵀX + λI)β = Xᵀy`. With an intercept the
/// columns and `y` are centered first, so the intercept is not penalized.
pub fn fit_ridge(x: &Matrix, y: &[f64], params: &LearnerParams) -> Result<RidgeModel, DmlError> {
    params.validate()?;
    let (n, p) = (x.rows(), x.cols());
    if n != y.len() {
        return Err(DmlError::InvalidSpec(format!("{n} rows but {} targets", y.len())));
    }
    if n == 0 {
        return Err(DmlError::InsufficientData { n: 0, required: 1 });
    }
    let (x_mean, y_mean) = if params.intercept {
        let mut m = vec![0.0; p];
        for r in 0..n {
            for (mj, v) in m.iter_mut().zip(x.row(r)) {
                *mj += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= n as f64);
        (m, y.iter().sum::<f64>() / n as f64)
    } else {
        (vec![0.0; p], 0.0)
    };
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut centered = vec![0.0; p];
    for r in 0..n {
        for (c, (v, m)) in centered.iter_mut().zip(x.row(r).iter().zip(&x_mean)) {
            *c = v - m;
        }
        let yr = y[r] - y_mean;
        for i in 0..p {
            rhs[i] += centered[i] * yr;
            for j in 0..=i {
                gram[i * p + j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[j * p + i] = gram[i * p + j];
        }
        gram[i * p + i] += params.ridge_lambda;
    }
    let coefficients = if p == 0 {
        Vec::new()
    } else {
        cholesky(&mut gram, p, PIVOT_TOL).ok_or(DmlError::SingularSystem)?;
        cholesky_solve(&gram, p, &rhs)
    };
    let intercept = y_mean - x_mean.iter().zip(&coefficients).map(|(m, b)| m * b).sum::<f64>();
    Ok(RidgeModel { intercept, coefficients })
}

/// Numeric analysis rows: outcome, treatment and controls per student.
#[derive(Debug, Clone, PartialEq)]
pub struct DmlData {
    pub ids: Vec<String>,
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub x: Matrix,
    pub control_names: Vec<String>,
    /// Rows dropped upstream for missing values.
    pub n_dropped: usize,
}

impl DmlData {
    pub fn new(ids: Vec<String>, y: Vec<f64>, t: Vec<f64>, x: Matrix, control_names: Vec<String>) -> Result<Self, DmlError> {
        let n = ids.len();
        if y.len() != n || t.len() != n || x.rows() != n || x.cols() != control_names.len() {
            return Err(DmlError::InvalidSpec("inconsistent data dimensions".into()));
        }
        let unique: BTreeSet<&String> = ids.iter().collect();
        if unique.len() != n {
            return Err(DmlError::InvalidSpec("duplicate student ids".into()));
        }
        Ok(Self { ids, y, t, x, control_names, n_dropped: 0 })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Rows sorted by id.
    fn canonical(&self) -> DmlData {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.ids[a].cmp(&self.ids[b]));
        self.subset(&order)
    }

    fn subset(&self, idx: &[usize]) -> DmlData {
        DmlData {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            x: self.x.select_rows(idx),
            control_names: self.control_names.clone(),
            n_dropped: self.n_dropped,
        }
    }
}

/// Controls plus the requested expansion columns.
pub fn expand_controls(x: &Matrix, names: &[String], expansions: &[Expansion]) -> Result<Matrix, DmlError> {
    let col = |name: &str| {
        names.iter().position(|n| n == name).ok_or_else(|| DmlError::InvalidSpec(format!("expansion refers to unknown control {name}")))
    };
    let mut pairs = Vec::new();
    for e in expansions {
        match e {
            Expansion::Square(a) => pairs.push((col(a)?, col(a)?)),
            Expansion::Interaction(a, b) => pairs.push((col(a)?, col(b)?)),
            Expansion::AllSquares => pairs.extend((0..names.len()).map(|j| (j, j))),
        }
    }
    let mut extra = Matrix::zeros(x.rows(), pairs.len());
    for r in 0..x.rows() {
        let row = x.row(r);
        for (c, &(a, b)) in pairs.iter().enumerate() {
            extra.set(r, c, row[a] * row[b]);
        }
    }
    Ok(x.hcat(&extra))
}

/// Fold of each id: ids are ranked by seeded hash (ties by id) and dealt
/// round-robin, which keeps fold sizes within one of each other.
pub fn fold_assignment(ids: &[String], folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<(u64, &str, usize)> = ids.iter().enumerate().map(|(i, id)| (stable_hash(seed, id), id.as_str(), i)).collect();
    order.sort();
    let mut out = vec![0; ids.len()];
    for (rank, &(_, _, i)) in order.iter().enumerate() {
        out[i] = rank % folds;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostic {
    pub fold: usize,
    pub n: usize,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlEstimate {
    pub theta: f64,
    pub std_error: f64,
    pub ci95: [f64; 2],
    pub n_used: usize,
    pub n_dropped: usize,
    pub fold_thetas: Vec<FoldDiagnostic>,
}

impl DmlEstimate {
    fn new(theta: f64, std_error: f64, n_used: usize, n_dropped: usize, fold_thetas: Vec<FoldDiagnostic>) -> Self {
        Self { theta, std_error, ci95: [theta - 1.96 * std_error, theta + 1.96 * std_error], n_used, n_dropped, fold_thetas }
    }
}

/// Cross-fitted partialling-out estimate of θ.
pub fn crossfit(data: &DmlData, folds: usize, learner: &LearnerParams, seed: u64) -> Result<DmlEstimate, DmlError> {
    learner.validate()?;
    if folds < 2 {
        return Err(DmlError::InvalidSpec(format!("folds must be >= 2, got {folds}")));
    }
    let required = MIN_ROWS_PER_FOLD * folds;
    if data.len() < required {
        return Err(DmlError::InsufficientData { n: data.len(), required });
    }
    let data = data.canonical();
    let n = data.len();
    if data.t.iter().all(|&v| v == data.t[0]) {
        return Err(DmlError::ZeroTreatmentVariation);
    }
    let design = expand_controls(&data.x, &data.control_names, &learner.expansions)?;
    let fold_of = fold_assignment(&data.ids, folds, seed);
    let mut y_res = vec![0.0; n];
    let mut t_res = vec![0.0; n];
    let mut fold_thetas = Vec::with_capacity(folds);
    for k in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] == k);
        let x_train = design.select_rows(&train);
        let g = fit_ridge(&x_train, &train.iter().map(|&i| data.y[i]).collect::<Vec<_>>(), learner)?;
        let m = fit_ridge(&x_train, &train.iter().map(|&i| data.t[i]).collect::<Vec<_>>(), learner)?;
        let (mut num, mut den) = (0.0, 0.0);
        for &i in &test {
            let row = design.row(i);
            y_res[i] = data.y[i] - g.predict(row);
            t_res[i] = data.t[i] - m.predict(row);
            num += t_res[i] * y_res[i];
            den += t_res[i] * t_res[i];
        }
        fold_thetas.push(FoldDiagnostic { fold: k, n: test.len(), theta: if den > 0.0 { num / den } else { f64::NAN } });
    }
    let sum_tt: f64 = t_res.iter().map(|v| v * v).sum();
    let scale: f64 = data.t.iter().map(|v| v * v).sum::<f64>().max(1.0);
    if !(sum_tt > 1e-10 * scale) {
        return Err(DmlError::ZeroTreatmentVariation);
    }
    let theta = t_res.iter().zip(&y_res).map(|(a, b)| a * b).sum::<f64>() / sum_tt;
    let nf = n as f64;
    let mean_psi2 = t_res.iter().zip(&y_res).map(|(t, y)| {
        let psi = t * (y - theta * t);
        psi * psi
    }).sum::<f64>() / nf;
    let mean_tt = sum_tt / nf;
    let std_error = sqrt(mean_psi2 / (mean_tt * mean_tt) / nf);
    Ok(DmlEstimate::new(theta, std_error, n, data.n_dropped, fold_thetas))
}

/// Single ridge regression of Y on (T, X) without expansions; reports T's
/// coefficient with a homoskedastic standard error.
pub fn naive(data: &DmlData, learner: &LearnerParams) -> Result<DmlEstimate, DmlError> {
    learner.validate()?;
    let data = data.canonical();
    let n = data.len();
    let p = data.x.cols() + 1;
    let dof = n as i64 - p as i64 - i64::from(learner.intercept);
    if dof < 1 {
        return Err(DmlError::InsufficientData { n, required: n + (1 - dof) as usize });
    }
    let t_col = Matrix::from_row_major(n, 1, data.t.clone());
    let design = t_col.hcat(&data.x);
    let model = fit_ridge(&design, &data.y, learner)?;
    let rss: f64 = (0..n).map(|r| {
        let e = data.y[r] - model.predict(design.row(r));
        e * e
    }).sum();
    let sigma2 = rss / dof as f64;
    // First diagonal entry of the inverse of the (centered) penalized Gram matrix.
    let mut mean = vec![0.0; p];
    if learner.intercept {
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(design.row(r)) {
                *m += v / n as f64;
            }
        }
    }
    let mut gram = vec![0.0; p * p];
    for r in 0..n {
        let row = design.row(r);
        for i in 0..p {
            for j in 0..p {
                gram[i * p + j] += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..p {
        gram[i * p + i] += learner.ridge_lambda;
    }
    cholesky(&mut gram, p, PIVOT_TOL).ok_or(DmlError::SingularSystem)?;
    let mut e0 = vec![0.0; p];
    e0[0] = 1.0;
    let inv00 = cholesky_solve(&gram, p, &e0)[0];
    Ok(DmlEstimate::new(model.coefficients[0], sqrt(sigma2 * inv00), n, data.n_dropped, Vec::new()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEffects {
    pub group_by: String,
    pub min_group_size: usize,
    pub effects: BTreeMap<String, DmlEstimate>,
    /// Groups below the size threshold with their complete-case counts.
    pub omitted: BTreeMap<String, usize>,
}

/// Runs [`crossfit`] independently within each group.
pub fn crossfit_by_group(
    data: &DmlData,
    groups: &BTreeMap<String, String>,
    group_by: &str,
    min_group_size: usize,
    folds: usize,
    learner: &LearnerParams,
    seed: u64,
) -> Result<GroupEffects, DmlError> {
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, id) in data.ids.iter().enumerate() {
        let g = groups.get(id).ok_or_else(|| DmlError::MissingGroup(id.clone()))?;
        members.entry(g.as_str()).or_default().push(i);
    }
    let mut out = GroupEffects { group_by: group_by.into(), min_group_size, effects: BTreeMap::new(), omitted: BTreeMap::new() };
    for (g, idx) in members {
        if idx.len() < min_group_size {
            out.omitted.insert(g.into(), idx.len());
            continue;
        }
        let est = crossfit(&data.subset(&idx), folds, learner, seed)
            .map_err(|e| DmlError::Group { group: g.into(), source: Box::new(e) })?;
        out.effects.insert(g.into(), est);
    }
    Ok(out)
}

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlSpec {
    pub outcome: String,
    pub treatment: String,
    pub controls: Vec<String>,
    pub decision_point: ObservationWindow,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(flatten)]
    pub learner: LearnerParams,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
}

impl DmlSpec {
    pub fn validate(&self) -> Result<(), DmlError> {
        if self.controls.contains(&self.outcome) || self.controls.contains(&self.treatment) {
            return Err(DmlError::InvalidSpec("outcome and treatment must not be controls".into()));
        }
        if self.outcome == self.treatment {
            return Err(DmlError::InvalidSpec("outcome and treatment must differ".into()));
        }
        let unique: BTreeSet<&String> = self.controls.iter().collect();
        if unique.len() != self.controls.len() {
            return Err(DmlError::InvalidSpec("duplicate controls".into()));
        }
        if self.folds < 2 {
            return Err(DmlError::InvalidSpec(format!("folds must be >= 2, got {}", self.folds)));
        }
        self.learner.validate()
    }
}

/// Leakage-checks the spec and extracts complete-case numeric rows.
///
/// Treatment and controls must be observable at the decision point. The
/// outcome must be registered but is exempt from the check: it is what the
/// analysis explains, normally observed after the decision.
pub fn prepare(dataset: &Dataset, spec: &DmlSpec) -> Result<DmlData, DmlError> {
    spec.validate()?;
    let registry = dataset.registry();
    let mut inputs: Vec<&str> = vec![spec.treatment.as_str()];
    inputs.extend(spec.controls.iter().map(String::as_str));
    assert_no_leakage(&inputs, spec.decision_point, registry)?;
    let outcome = registry.get(&spec.outcome).ok_or_else(|| TemporalError::UnregisteredFeature(spec.outcome.clone()))?;
    let mut columns = vec![outcome];
    columns.extend(inputs.iter().map(|name| registry.get(name).expect("checked above")));
    if let Some(d) = columns.iter().find(|d| d.kind == FeatureKind::Categorical) {
        return Err(DmlError::InvalidSpec(format!("feature {} is categorical", d.name)));
    }
    let p = spec.controls.len();
    let (mut ids, mut y, mut t, mut xs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut dropped = 0;
    for record in dataset.records() {
        let values: Option<Vec<f64>> = columns.iter().map(|d| dataset.value(record, d).and_then(|v| v.as_f64())).collect();
        match values {
            Some(v) => {
                ids.push(record.id.clone());
                y.push(v[0]);
                t.push(v[1]);
                xs.extend_from_slice(&v[2..]);
            }
            None => dropped += 1,
        }
    }
    let n = ids.len();
    let mut data = DmlData::new(ids, y, t, Matrix::from_row_major(n, p, xs), spec.controls.clone())?;
    data.n_dropped = dropped;
    Ok(data)
}

pub fn crossfit_dml(dataset: &Dataset, spec: &DmlSpec) -> Result<DmlEstimate, DmlError> {
    crossfit(&prepare(dataset, spec)?, spec.folds, &spec.learner, spec.seed)
}

pub fn naive_regression(dataset: &Dataset, spec: &DmlSpec) -> Result<DmlEstimate, DmlError> {
    naive(&prepare(dataset, spec)?, &spec.learner)
}

/// Group-conditional effects; `groups` maps student id to group key and must
/// cover every complete-case row.
pub fn group_cate(
    dataset: &Dataset,
    spec: &DmlSpec,
    groups: &BTreeMap<String, String>,
    min_group_size: usize,
) -> Result<GroupEffects, DmlError> {
    let data = prepare(dataset, spec)?;
    let key = spec.group_by.as_deref().unwrap_or("group");
    crossfit_by_group(&data, groups, key, min_group_size, spec.folds, &spec.learner, spec.seed)
}
