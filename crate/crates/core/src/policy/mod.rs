//! Interventions on the three policy axes and the factorial experiments that
//! cross them.
//!
//! Structural actions edit the prerequisite graph and offerings, pedagogical
//! actions shift course pass logits, regulatory actions change the regularity
//! rule and relax edge kinds. Every application re-validates the curriculum.

mod experiment;

pub use experiment::{
    decompose_effects, detect_amplifiers, flag_adverse_outcomes, run_experiment, AmplifierVerdict, CellId, CellResult,
    Contrast, EffectsReport, ExperimentDesign, ExperimentError, Outcome, OutcomeEffects, OutcomeStats, ReplicationOutcome,
    ReportThresholds,
};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{Curriculum, CurriculumError, EdgeKind, Parity};
use crate::sim::BehaviorRules;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Axis {
    Structural,
    Pedagogical,
    Regulatory,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Structural, Axis::Pedagogical, Axis::Regulatory];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Structural => "STRUCTURAL",
            Axis::Pedagogical => "PEDAGOGICAL",
            Axis::Regulatory => "REGULATORY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRef {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralAction {
    #[serde(default)]
    pub remove_edges: Vec<EdgeRef>,
    #[serde(default)]
    pub add_offerings: BTreeMap<String, BTreeSet<Parity>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedagogicalAction {
    /// Added to the pass logit of the targeted courses.
    #[serde(default)]
    pub pass_shift: f64,
    /// Targeted courses; all courses when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub courses: Option<Vec<String>>,
    /// Spread of targeted course difficulties around their mean is
    /// multiplied by this factor.
    #[serde(default = "one")]
    pub difficulty_variance_scale: f64,
    /// Fraction in [0, 1] by which the preparation-gap penalty is reduced.
    #[serde(default)]
    pub gap_remediation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulatoryAction {
    #[serde(default)]
    pub window_delta: i32,
    #[serde(default)]
    pub required_delta: i32,
    /// Change to the per-term enrollment cap of regular students.
    #[serde(default)]
    pub cap_delta: i32,
    /// Turn every REQUIRES_PASSED edge into REQUIRES_REGULARIZED.
    #[serde(default)]
    pub downgrade_all: bool,
    #[serde(default)]
    pub downgrade_edges: Vec<EdgeRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicyIntervention {
    Structural(StructuralAction),
    Pedagogical(PedagogicalAction),
    Regulatory(RegulatoryAction),
}

impl PolicyIntervention {
    pub fn axis(&self) -> Axis {
        match self {
            PolicyIntervention::Structural(_) => Axis::Structural,
            PolicyIntervention::Pedagogical(_) => Axis::Pedagogical,
            PolicyIntervention::Regulatory(_) => Axis::Regulatory,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("policy produced an invalid curriculum: {0}")]
    Curriculum(#[from] CurriculumError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppliedPolicy {
    pub curriculum: Curriculum,
    pub rules: BehaviorRules,
    /// Set-based actions that changed nothing.
    pub warnings: Vec<String>,
}

/// Applies interventions in order and re-validates the result.
pub fn apply_policy(
    curriculum: &Curriculum,
    rules: &BehaviorRules,
    interventions: &[PolicyIntervention],
) -> Result<AppliedPolicy, PolicyError> {
    let mut out = AppliedPolicy { curriculum: curriculum.clone(), rules: rules.clone(), warnings: Vec::new() };
    for iv in interventions {
        let mut courses = out.curriculum.courses().to_vec();
        let mut edges = out.curriculum.edges().to_vec();
        let find_course = |courses: &[crate::curriculum::Course], id: &str| {
            courses.iter().position(|c| c.id == id).ok_or_else(|| PolicyError::InvalidPolicy(format!("unknown course {id}")))
        };
        match iv {
            PolicyIntervention::Structural(a) => {
                for e in &a.remove_edges {
                    find_course(&courses, &e.from)?;
                    find_course(&courses, &e.to)?;
                    let before = edges.len();
                    edges.retain(|x| !(x.from == e.from && x.to == e.to));
                    if edges.len() == before {
                        out.warnings.push(format!("edge {} -> {} already absent", e.from, e.to));
                    }
                }
                for (id, parities) in &a.add_offerings {
                    let i = find_course(&courses, id)?;
                    if parities.is_subset(&courses[i].terms_offered) {
                        out.warnings.push(format!("course {id} already offered in every requested parity"));
                    }
                    courses[i].terms_offered.extend(parities.iter().copied());
                }
            }
            PolicyIntervention::Pedagogical(a) => {
                if !(a.pass_shift.is_finite() && a.difficulty_variance_scale.is_finite() && a.difficulty_variance_scale >= 0.0) {
                    return Err(PolicyError::InvalidPolicy("pass_shift must be finite and difficulty_variance_scale >= 0".into()));
                }
                if !(0.0..=1.0).contains(&a.gap_remediation) {
                    return Err(PolicyError::InvalidPolicy("gap_remediation must lie in [0, 1]".into()));
                }
                out.rules.pass.a5_prep_gap *= 1.0 - a.gap_remediation;
                let targets: Vec<usize> = match &a.courses {
                    None => (0..courses.len()).collect(),
                    Some(list) => list.iter().map(|id| find_course(&courses, id)).collect::<Result<_, _>>()?,
                };
                if !targets.is_empty() {
                    let mean = targets.iter().map(|&i| courses[i].base_difficulty).sum::<f64>() / targets.len() as f64;
                    for &i in &targets {
                        let d = courses[i].base_difficulty;
                        courses[i].base_difficulty = mean + a.difficulty_variance_scale * (d - mean) + a.pass_shift;
                    }
                }
            }
            PolicyIntervention::Regulatory(a) => {
                let reg = &mut out.rules.regularity;
                let window = i64::from(reg.window_terms) + i64::from(a.window_delta);
                let required = i64::from(reg.required_completions) + i64::from(a.required_delta);
                if window < 1 || required < 0 {
                    return Err(PolicyError::InvalidPolicy(format!(
                        "regularity rule would become {required} completions in {window} terms"
                    )));
                }
                reg.window_terms = window as u32;
                reg.required_completions = required as u32;
                let cap = out.rules.nominal_cap as i64 + i64::from(a.cap_delta);
                if cap < out.rules.reduced_cap.max(1) as i64 {
                    return Err(PolicyError::InvalidPolicy(format!("enrollment cap would become {cap}")));
                }
                out.rules.nominal_cap = cap as usize;
                if a.downgrade_all {
                    if !edges.iter().any(|e| e.kind == EdgeKind::RequiresPassed) {
                        out.warnings.push("no REQUIRES_PASSED edges to downgrade".into());
                    }
                    edges.iter_mut().for_each(|e| e.kind = EdgeKind::RequiresRegularized);
                }
                for r in &a.downgrade_edges {
                    match edges.iter_mut().find(|e| e.from == r.from && e.to == r.to) {
                        None => return Err(PolicyError::InvalidPolicy(format!("unknown edge {} -> {}", r.from, r.to))),
                        Some(e) if e.kind == EdgeKind::RequiresRegularized => {
                            out.warnings.push(format!("edge {} -> {} already REQUIRES_REGULARIZED", r.from, r.to))
                        }
                        Some(e) => e.kind = EdgeKind::RequiresRegularized,
                    }
                }
            }
        }
        let mut spec = out.curriculum.to_spec();
        spec.courses = courses;
        spec.edges = edges;
        out.curriculum = Curriculum::from_spec(spec)?;
    }
    Ok(out)
}
