//! Trajectory archetypes.
//!
//! Students are summarized by a fixed vector of trajectory-shape features,
//! z-scored with training statistics, and clustered with seeded Lloyd
//! iterations. With five clusters each centroid is named by a priority rule
//! table evaluated on de-standardized centroids; the naming is forced to be a
//! bijection.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::Curriculum;
use crate::math::sqrt;
use crate::rng::substream;
use crate::temporal::{assert_no_leakage, derived, CourseOutcome, ExitStatus, FeatureRegistry, ObservationWindow, StudentRecord, TemporalError};

pub const FEATURE_NAMES: [&str; 9] = [
    "early_velocity",
    "mid_velocity",
    "late_velocity",
    "failure_rate",
    "peak_friction",
    "early_friction",
    "regularity_losses",
    "exit_term",
    "graduated",
];

const DIM: usize = FEATURE_NAMES.len();
const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArchetypeLabel {
    RegularProgression,
    DampedProgression,
    EarlyFriction,
    LateExhaustion,
    EarlyExit,
}

impl ArchetypeLabel {
    /// Rule-table priority order.
    pub const PRIORITY: [ArchetypeLabel; 5] = [
        ArchetypeLabel::EarlyExit,
        ArchetypeLabel::EarlyFriction,
        ArchetypeLabel::LateExhaustion,
        ArchetypeLabel::DampedProgression,
        ArchetypeLabel::RegularProgression,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchetypeLabel::RegularProgression => "REGULAR_PROGRESSION",
            ArchetypeLabel::DampedProgression => "DAMPED_PROGRESSION",
            ArchetypeLabel::EarlyFriction => "EARLY_FRICTION",
            ArchetypeLabel::LateExhaustion => "LATE_EXHAUSTION",
            ArchetypeLabel::EarlyExit => "EARLY_EXIT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExitKind {
    Graduated,
    Dropped,
    Enrolled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFeatures {
    pub early_velocity: f64,
    pub mid_velocity: f64,
    pub late_velocity: f64,
    pub failure_rate: f64,
    pub peak_friction: f64,
    /// Peak friction over terms 1-2.
    pub early_friction: f64,
    pub regularity_losses: u32,
    /// Exit term when the exit is visible, otherwise the last observed term.
    pub exit_term: u32,
    pub exit: ExitKind,
    /// Fewer than three observed terms: mid and late velocities are zero.
    pub short_trajectory: bool,
}

impl TrajectoryFeatures {
    pub fn vector(&self) -> Vec<f64> {
        vec![
            self.early_velocity,
            self.mid_velocity,
            self.late_velocity,
            self.failure_rate,
            self.peak_friction,
            self.early_friction,
            f64::from(self.regularity_losses),
            f64::from(self.exit_term),
            if self.exit == ExitKind::Graduated { 1.0 } else { 0.0 },
        ]
    }
}

/// Thresholds of the naming rules, applied to de-standardized centroids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleThresholds {
    pub early_exit_max_term: f64,
    pub high_friction: f64,
    pub high_velocity: f64,
    pub low_velocity: f64,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        Self { early_exit_max_term: 2.0, high_friction: 0.5, high_velocity: 0.8, low_velocity: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeConfig {
    /// Nominal programme length; nominal credits per term is the
    /// curriculum's total credits divided by this.
    pub nominal_terms: u32,
    #[serde(default)]
    pub thresholds: RuleThresholds,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArchetypeError {
    #[error(transparent)]
    Leakage(#[from] TemporalError),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Trajectory features computed from snapshots up to the term of `as_of`.
/// The per-term N3 features consumed are checked with the leakage guard
/// first, so a pre-trajectory decision point is rejected.
pub fn extract_features(
    registry: &FeatureRegistry,
    record: &StudentRecord,
    curriculum: &Curriculum,
    as_of: ObservationWindow,
    config: &ArchetypeConfig,
) -> Result<TrajectoryFeatures, ArchetypeError> {
    if config.nominal_terms == 0 {
        return Err(ArchetypeError::InvalidConfig("nominal_terms must be positive"));
    }
    let horizon = as_of.term();
    let mut consumed = Vec::new();
    for t in 1..=horizon.max(1) {
        let probe = derived::name(derived::CREDITS, t);
        if t > 1 && registry.get(&probe).is_none() {
            break;
        }
        for family in [derived::CREDITS, derived::FAILED, derived::FRICTION, derived::REGULAR] {
            consumed.push(derived::name(family, t));
        }
    }
    assert_no_leakage(&consumed, as_of, registry)?;

    let nominal = curriculum.total_credits() / f64::from(config.nominal_terms);
    let snaps: Vec<_> = record.n3.iter().take_while(|s| s.term <= horizon).collect();
    let observed = snaps.len();
    let velocity = |from: usize, to: usize| -> f64 {
        // 1-based inclusive term range
        if from > to || to == 0 {
            return 0.0;
        }
        let credits: f64 = snaps[from - 1..to].iter().map(|s| s.credits_earned).sum();
        credits / (to + 1 - from) as f64 / nominal
    };
    let early_velocity = velocity(1, observed.min(2));
    let short_trajectory = observed < 3;
    let (mid_velocity, late_velocity) = if short_trajectory {
        (0.0, 0.0)
    } else {
        let a = observed / 3;
        let b = 2 * observed / 3;
        (velocity(a + 1, b), velocity(b + 1, observed))
    };
    let mut attempts = 0usize;
    let mut failures = 0usize;
    let mut losses = 0u32;
    let mut was_regular = true;
    for s in &snaps {
        attempts += s.enrollments.len();
        failures += s.outcomes.values().filter(|o| matches!(o, CourseOutcome::Failed | CourseOutcome::Withdrawn)).count();
        if was_regular && !s.regularity_status {
            losses += 1;
        }
        was_regular = s.regularity_status;
    }
    let failure_rate = if attempts == 0 { 0.0 } else { (failures as f64 / attempts as f64).min(1.0) };
    let peak = |n: usize| snaps.iter().take(n).map(|s| s.friction_index).fold(0.0, f64::max);
    let (exit, exit_term) = match record.exit {
        ExitStatus::Graduated(t) if t <= horizon => (ExitKind::Graduated, t),
        ExitStatus::Dropped(t) if t <= horizon => (ExitKind::Dropped, t),
        _ => (ExitKind::Enrolled, observed as u32),
    };
    Ok(TrajectoryFeatures {
        early_velocity,
        mid_velocity,
        late_velocity,
        failure_rate,
        peak_friction: peak(observed),
        early_friction: peak(2),
        regularity_losses: losses,
        exit_term,
        exit,
        short_trajectory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Population mean and standard deviation per column. Constant columns
    /// are rejected.
    pub fn fit(points: &[Vec<f64>]) -> Result<Self, ArchetypeError> {
        let n = points.len() as f64;
        let dim = points[0].len();
        let mut means = vec![0.0; dim];
        for p in points {
            for (m, x) in means.iter_mut().zip(p) {
                *m += x / n;
            }
        }
        let mut scales = vec![0.0; dim];
        for p in points {
            for j in 0..dim {
                let d = p[j] - means[j];
                scales[j] += d * d / n;
            }
        }
        for (j, s) in scales.iter_mut().enumerate() {
            *s = sqrt(*s);
            if !(*s > 1e-12 * (1.0 + means[j].abs())) {
                return Err(ArchetypeError::DegenerateInput(alloc::format!("feature column {j} is constant")));
            }
        }
        Ok(Self { means, scales })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.means).zip(&self.scales).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.means).zip(&self.scales).map(|((v, m), s)| m + v * s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeModel {
    pub k: usize,
    pub feature_names: Vec<String>,
    /// Centroids in standardized space.
    pub centroids: Vec<Vec<f64>>,
    pub standardization: Standardization,
    pub label_map: Vec<ArchetypeLabel>,
    pub thresholds: RuleThresholds,
    pub seed: u64,
    pub iterations: usize,
}

impl ArchetypeModel {
    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn nearest(&self, raw: &[f64]) -> usize {
        nearest(&self.centroids, &self.standardization.apply(raw))
    }

    pub fn classify_vector(&self, raw: &[f64]) -> ArchetypeLabel {
        self.label_map[self.nearest(raw)]
    }
}

/// Label of the nearest centroid.
pub fn classify(model: &ArchetypeModel, features: &TrajectoryFeatures) -> ArchetypeLabel {
    model.classify_vector(&features.vector())
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], z: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(c, z);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

pub fn fit_archetypes(features: &[TrajectoryFeatures], k: usize, seed: u64, thresholds: RuleThresholds) -> Result<ArchetypeModel, ArchetypeError> {
    let points: Vec<Vec<f64>> = features.iter().map(TrajectoryFeatures::vector).collect();
    let names = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    fit_vectors(&points, names, k, seed, thresholds)
}

/// Seeded k-means on raw feature rows (standardized internally).
///
/// The first centroid is a seeded uniform pick; each next one is the point
/// farthest from its nearest chosen centroid. Lloyd iterations stop at an
/// assignment fixpoint or after 100 rounds; an emptied cluster keeps its
/// previous centroid.
pub fn fit_vectors(
    points: &[Vec<f64>],
    feature_names: Vec<String>,
    k: usize,
    seed: u64,
    thresholds: RuleThresholds,
) -> Result<ArchetypeModel, ArchetypeError> {
    if k == 0 {
        return Err(ArchetypeError::InvalidConfig("k must be positive"));
    }
    if points.is_empty() {
        return Err(ArchetypeError::DegenerateInput("no points".into()));
    }
    let standardization = Standardization::fit(points)?;
    let z: Vec<Vec<f64>> = points.iter().map(|p| standardization.apply(p)).collect();
    let mut distinct: Vec<&Vec<f64>> = z.iter().collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < k {
        return Err(ArchetypeError::DegenerateInput(alloc::format!(
            "{} distinct points for {k} clusters",
            distinct.len()
        )));
    }

    let mut rng = substream(seed, "kmeans-init");
    let mut centroids: Vec<Vec<f64>> = vec![z[rng.random_range(0..z.len())].clone()];
    let mut closest: Vec<f64> = z.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let mut far = 0;
        for i in 1..z.len() {
            if closest[i] > closest[far] {
                far = i;
            }
        }
        centroids.push(z[far].clone());
        for (c, p) in closest.iter_mut().zip(&z) {
            *c = c.min(dist2(p, &z[far]));
        }
    }

    let mut assignment: Vec<usize> = z.iter().map(|p| nearest(&centroids, p)).collect();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let dim = z[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in z.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = z.iter().map(|p| nearest(&centroids, p)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }

    let label_map = label_centroids(&centroids, &standardization, &thresholds);
    Ok(ArchetypeModel { k, feature_names, centroids, standardization, label_map, thresholds, seed, iterations })
}

/// Signed rule margin: nonnegative iff the centroid satisfies the rule.
fn rule_score(label: ArchetypeLabel, c: &[f64], t: &RuleThresholds) -> f64 {
    let [early, mid, late, _fail, _peak, early_friction, _losses, exit_term, graduated] = [
        c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8],
    ];
    let not_graduated = 0.5 - graduated;
    match label {
        ArchetypeLabel::EarlyExit => (t.early_exit_max_term - exit_term).min(not_graduated),
        ArchetypeLabel::EarlyFriction => (early_friction - t.high_friction).min(exit_term - t.early_exit_max_term - 1e-9),
        ArchetypeLabel::LateExhaustion => (early - t.high_velocity).min(t.low_velocity - late - 1e-9).min(not_graduated),
        ArchetypeLabel::DampedProgression => [early, mid, late]
            .iter()
            .map(|&v| (v - t.low_velocity).min(t.high_velocity - v - 1e-9))
            .fold(f64::INFINITY, f64::min),
        ArchetypeLabel::RegularProgression => [early, mid, late]
            .iter()
            .map(|&v| v - t.high_velocity)
            .fold(graduated - 0.5, f64::min),
    }
}

/// Names centroids by the rule table. With five centroids the result is a
/// bijection onto the five labels: rules are applied in priority order, each
/// taking the best-scoring unclaimed centroid that satisfies it, and leftover
/// labels then go to leftover centroids by best score. With any other count
/// each centroid simply takes the first rule it satisfies. Centroids that are
/// not trajectory-feature vectors are all labelled regular.
pub fn label_centroids(centroids: &[Vec<f64>], standardization: &Standardization, thresholds: &RuleThresholds) -> Vec<ArchetypeLabel> {
    if centroids.first().is_some_and(|c| c.len() != DIM) {
        return vec![ArchetypeLabel::RegularProgression; centroids.len()];
    }
    let raw: Vec<Vec<f64>> = centroids.iter().map(|c| standardization.invert(c)).collect();
    let first_match = |c: &[f64]| {
        ArchetypeLabel::PRIORITY[..4]
            .iter()
            .copied()
            .find(|&l| rule_score(l, c, thresholds) >= 0.0)
            .unwrap_or(ArchetypeLabel::RegularProgression)
    };
    if raw.len() != 5 {
        return raw.iter().map(|c| first_match(c)).collect();
    }
    let mut out: Vec<Option<ArchetypeLabel>> = vec![None; 5];
    let mut pending = Vec::new();
    let best = |out: &[Option<ArchetypeLabel>], label: ArchetypeLabel, eligible: &dyn Fn(usize) -> bool| {
        (0..5)
            .filter(|&i| out[i].is_none() && eligible(i))
            .map(|i| (i, rule_score(label, &raw[i], thresholds)))
            .fold(None, |acc: Option<(usize, f64)>, (i, s)| match acc {
                Some((_, bs)) if bs >= s => acc,
                _ => Some((i, s)),
            })
            .map(|(i, _)| i)
    };
    for label in ArchetypeLabel::PRIORITY {
        let pick = if label == ArchetypeLabel::RegularProgression {
            best(&out, label, &|i| first_match(&raw[i]) == ArchetypeLabel::RegularProgression)
        } else {
            best(&out, label, &|i| rule_score(label, &raw[i], thresholds) >= 0.0)
        };
        match pick {
            Some(i) => out[i] = Some(label),
            None => pending.push(label),
        }
    }
    for label in pending {
        let i = best(&out, label, &|_| true).expect("as many centroids as labels");
        out[i] = Some(label);
    }
    out.into_iter().map(|l| l.expect("every centroid labelled")).collect()
}
