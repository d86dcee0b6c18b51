//! Prerequisite graphs.
//!
//! A [`Curriculum`] is a validated DAG of courses whose edges carry the status
//! the prerequisite must reach before the dependent course can be taken.
//! Courses are kept sorted by id and every metric breaks ties by id order, so
//! all results are deterministic.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Reverse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod friction;
mod metrics;
mod schedule;

pub use friction::{course_status_at, friction_from_status, friction_index, CourseStatus};
pub use metrics::{backbone_courses, bottleneck_scores, longest_chain, tail_lengths, Chain};
pub use schedule::{completion_plan, delay_propagation, greedy_completion_terms, min_completion_terms, CompletionPlan};
pub(crate) use schedule::selection_priority;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    /// Calendar parity of `term` (1-based) when term 1 falls on `start`.
    pub fn of_term(term: u32, start: Parity) -> Parity {
        if term % 2 == 1 {
            start
        } else {
            start.flip()
        }
    }

    pub fn flip(self) -> Parity {
        match self {
            Parity::Odd => Parity::Even,
            Parity::Even => Parity::Odd,
        }
    }
}

impl Default for Parity {
    fn default() -> Self {
        Parity::Odd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeKind {
    /// The prerequisite must be regularized (coursework completed) or passed.
    RequiresRegularized,
    /// The prerequisite must be passed.
    RequiresPassed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Course {
    pub id: String,
    pub name: String,
    pub credits: f64,
    pub terms_offered: BTreeSet<Parity>,
    /// Intercept added to the pass-probability logit.
    #[serde(default)]
    pub base_difficulty: f64,
}

impl Course {
    pub fn offered_in(&self, parity: Parity) -> bool {
        self.terms_offered.contains(&parity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrereqEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "GraduationSpec", try_from = "GraduationSpec")]
pub enum GraduationRule {
    AllCoursesPassed,
    CreditThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
enum RuleName {
    AllCoursesPassed,
    CreditThreshold,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraduationSpec {
    rule: RuleName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    credit_threshold: Option<f64>,
}

impl From<GraduationRule> for GraduationSpec {
    fn from(r: GraduationRule) -> Self {
        match r {
            GraduationRule::AllCoursesPassed => GraduationSpec { rule: RuleName::AllCoursesPassed, credit_threshold: None },
            GraduationRule::CreditThreshold(c) => GraduationSpec { rule: RuleName::CreditThreshold, credit_threshold: Some(c) },
        }
    }
}

impl TryFrom<GraduationSpec> for GraduationRule {
    type Error = &'static str;

    fn try_from(s: GraduationSpec) -> Result<Self, Self::Error> {
        match (s.rule, s.credit_threshold) {
            (RuleName::AllCoursesPassed, None) => Ok(GraduationRule::AllCoursesPassed),
            (RuleName::AllCoursesPassed, Some(_)) => Err("credit_threshold is only valid with CREDIT_THRESHOLD"),
            (RuleName::CreditThreshold, Some(c)) => Ok(GraduationRule::CreditThreshold(c)),
            (RuleName::CreditThreshold, None) => Err("CREDIT_THRESHOLD requires credit_threshold"),
        }
    }
}

/// The curriculum JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub courses: Vec<Course>,
    pub edges: Vec<PrereqEdge>,
    pub graduation: GraduationRule,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurriculumError {
    #[error("duplicate course id `{0}`")]
    DuplicateCourse(String),
    #[error("course `{id}` is invalid: {reason}")]
    InvalidCourse { id: String, reason: &'static str },
    #[error("edge {from} -> {to} references unknown course `{missing}`")]
    UnknownEndpoint { from: String, to: String, missing: String },
    #[error("duplicate edge {from} -> {to}")]
    DuplicateEdge { from: String, to: String },
    #[error("prerequisite cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("credit threshold must be positive and finite")]
    InvalidGraduationRule,
    #[error("unknown course `{0}`")]
    UnknownCourse(String),
    #[error("term {0} is out of range")]
    TermOutOfRange(u32),
    #[error("graduation is unreachable: {0}")]
    Unschedulable(String),
    #[error("load cap must be at least 1")]
    InvalidLoadCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CurriculumSpec", try_from = "CurriculumSpec")]
pub struct Curriculum {
    name: Option<String>,
    notes: Option<String>,
    courses: Vec<Course>,
    edges: Vec<PrereqEdge>,
    graduation: GraduationRule,
    index: BTreeMap<String, usize>,
    succ: Vec<Vec<usize>>,
    prereqs: Vec<Vec<(usize, EdgeKind)>>,
    topo: Vec<usize>,
}

impl From<Curriculum> for CurriculumSpec {
    fn from(c: Curriculum) -> Self {
        c.to_spec()
    }
}

impl TryFrom<CurriculumSpec> for Curriculum {
    type Error = CurriculumError;

    fn try_from(s: CurriculumSpec) -> Result<Self, Self::Error> {
        Curriculum::from_spec(s)
    }
}

impl Curriculum {
    /// Validates and indexes a curriculum. Rejects duplicate ids, invalid
    /// courses, dangling edges and cycles.
    pub fn build(
        courses: Vec<Course>,
        edges: Vec<PrereqEdge>,
        graduation: GraduationRule,
    ) -> Result<Self, CurriculumError> {
        Self::from_spec(CurriculumSpec { name: None, notes: None, courses, edges, graduation })
    }

    pub fn from_spec(spec: CurriculumSpec) -> Result<Self, CurriculumError> {
        let CurriculumSpec { name, notes, mut courses, mut edges, graduation } = spec;
        if let GraduationRule::CreditThreshold(c) = graduation {
            if !(c.is_finite() && c > 0.0) {
                return Err(CurriculumError::InvalidGraduationRule);
            }
        }
        courses.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = BTreeMap::new();
        for (i, c) in courses.iter().enumerate() {
            if c.id.is_empty() {
                return Err(CurriculumError::InvalidCourse { id: c.id.clone(), reason: "empty id" });
            }
            if !(c.credits.is_finite() && c.credits > 0.0) {
                return Err(CurriculumError::InvalidCourse { id: c.id.clone(), reason: "credits must be positive" });
            }
            if c.terms_offered.is_empty() {
                return Err(CurriculumError::InvalidCourse { id: c.id.clone(), reason: "terms_offered is empty" });
            }
            if !c.base_difficulty.is_finite() {
                return Err(CurriculumError::InvalidCourse { id: c.id.clone(), reason: "base_difficulty must be finite" });
            }
            if index.insert(c.id.clone(), i).is_some() {
                return Err(CurriculumError::DuplicateCourse(c.id.clone()));
            }
        }
        edges.sort();
        let n = courses.len();
        let mut succ = alloc::vec![Vec::new(); n];
        let mut prereqs = alloc::vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for e in &edges {
            let missing = |id: &String| CurriculumError::UnknownEndpoint {
                from: e.from.clone(),
                to: e.to.clone(),
                missing: id.clone(),
            };
            let f = *index.get(&e.from).ok_or_else(|| missing(&e.from))?;
            let t = *index.get(&e.to).ok_or_else(|| missing(&e.to))?;
            if f == t {
                return Err(CurriculumError::CycleDetected(alloc::vec![e.from.clone(), e.to.clone()]));
            }
            if !seen.insert((f, t)) {
                return Err(CurriculumError::DuplicateEdge { from: e.from.clone(), to: e.to.clone() });
            }
            succ[f].push(t);
            prereqs[t].push((f, e.kind));
        }
        for s in &mut succ {
            s.sort_unstable();
        }
        let topo = topo_order(&succ).map_err(|cycle| {
            CurriculumError::CycleDetected(cycle.into_iter().map(|i| courses[i].id.clone()).collect())
        })?;
        Ok(Self { name, notes, courses, edges, graduation, index, succ, prereqs, topo })
    }

    pub fn to_spec(&self) -> CurriculumSpec {
        CurriculumSpec {
            name: self.name.clone(),
            notes: self.notes.clone(),
            courses: self.courses.clone(),
            edges: self.edges.clone(),
            graduation: self.graduation,
        }
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    /// Name if one was declared, otherwise a content fingerprint prefix.
    pub fn reference(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => crate::fingerprint::fingerprint(&self.to_spec())[..16].to_string(),
        }
    }

    pub fn courses(&self) -> &[Course] {
        &self.courses
    }

    pub fn edges(&self) -> &[PrereqEdge] {
        &self.edges
    }

    pub fn graduation(&self) -> GraduationRule {
        self.graduation
    }

    pub fn len(&self) -> usize {
        self.courses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.courses.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn course(&self, idx: usize) -> &Course {
        &self.courses[idx]
    }

    pub fn successors(&self, idx: usize) -> &[usize] {
        &self.succ[idx]
    }

    /// Incoming edges of course `idx` as `(prerequisite, kind)`.
    pub fn prerequisites(&self, idx: usize) -> &[(usize, EdgeKind)] {
        &self.prereqs[idx]
    }

    /// Topological order; among ready courses the smallest id comes first.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn total_credits(&self) -> f64 {
        self.courses.iter().map(|c| c.credits).sum()
    }

    /// Whether a set of passed courses (as a predicate over indices) meets the
    /// graduation rule.
    pub fn graduation_met(&self, passed: impl Fn(usize) -> bool) -> bool {
        match self.graduation {
            GraduationRule::AllCoursesPassed => (0..self.len()).all(passed),
            GraduationRule::CreditThreshold(t) => {
                let earned: f64 = (0..self.len()).filter(|&i| passed(i)).map(|i| self.courses[i].credits).sum();
                earned >= t
            }
        }
    }
}

/// Kahn's algorithm with a min-heap. On failure returns one cycle.
fn topo_order(succ: &[Vec<usize>]) -> Result<Vec<usize>, Vec<usize>> {
    let n = succ.len();
    let mut indeg = alloc::vec![0usize; n];
    for s in succ {
        for &t in s {
            indeg[t] += 1;
        }
    }
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = heap.pop() {
        order.push(v);
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                heap.push(Reverse(w));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Every leftover node has a leftover predecessor; walk predecessors until a
    // node repeats.
    let mut pred_left = alloc::vec![None; n];
    for (v, s) in succ.iter().enumerate() {
        if indeg[v] == 0 {
            continue;
        }
        for &w in s {
            if indeg[w] > 0 && pred_left[w].is_none() {
                pred_left[w] = Some(v);
            }
        }
    }
    let start = (0..n).find(|&v| indeg[v] > 0).expect("leftover node");
    let mut pos = alloc::vec![usize::MAX; n];
    let mut walk = Vec::new();
    let mut v = start;
    while pos[v] == usize::MAX {
        pos[v] = walk.len();
        walk.push(v);
        v = pred_left[v].expect("leftover nodes have leftover predecessors");
    }
    let mut cycle: Vec<usize> = walk[pos[v]..].to_vec();
    cycle.reverse();
    cycle.push(cycle[0]);
    Err(cycle)
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use alloc::vec;

    #[test]
    fn builds_chain() {
        let c = graph(&["A", "B", "C", "D"], &[("A", "B"), ("B", "C"), ("C", "D")]);
        assert_eq!(c.len(), 4);
        assert_eq!(c.topological_order(), &[0, 1, 2, 3]);
    }

    #[test]
    fn rejects_two_cycle() {
        let err = Curriculum::build(
            vec![course("A"), course("B")],
            vec![edge("A", "B"), edge("B", "A")],
            GraduationRule::AllCoursesPassed,
        )
        .unwrap_err();
        match err {
            CurriculumError::CycleDetected(c) => {
                assert_eq!(c.first(), c.last());
                assert_eq!(c.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reports_longer_cycle_members() {
        let err = Curriculum::build(
            vec![course("A"), course("B"), course("C"), course("D")],
            vec![edge("A", "B"), edge("B", "C"), edge("C", "D"), edge("D", "B")],
            GraduationRule::AllCoursesPassed,
        )
        .unwrap_err();
        let CurriculumError::CycleDetected(c) = err else { panic!() };
        let members: BTreeSet<_> = c.iter().cloned().collect();
        assert_eq!(members, ["B", "C", "D"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn rejects_dangling_edge() {
        let err = Curriculum::build(vec![course("A")], vec![edge("A", "X")], GraduationRule::AllCoursesPassed)
            .unwrap_err();
        assert_eq!(
            err,
            CurriculumError::UnknownEndpoint { from: "A".into(), to: "X".into(), missing: "X".into() }
        );
    }

    #[test]
    fn rejects_bad_courses() {
        let mut c = course("A");
        c.terms_offered.clear();
        assert!(matches!(
            Curriculum::build(vec![c], vec![], GraduationRule::AllCoursesPassed),
            Err(CurriculumError::InvalidCourse { .. })
        ));
        assert!(matches!(
            Curriculum::build(vec![course("A"), course("A")], vec![], GraduationRule::AllCoursesPassed),
            Err(CurriculumError::DuplicateCourse(_))
        ));
        let mut c = course("A");
        c.credits = 0.0;
        assert!(Curriculum::build(vec![c], vec![], GraduationRule::AllCoursesPassed).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = graph(&["A", "B"], &[("A", "B")]);
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"ALL_COURSES_PASSED\""));
        let back: Curriculum = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let bad = r#"{"courses":[],"edges":[],"graduation":{"rule":"CREDIT_THRESHOLD"}}"#;
        assert!(serde_json::from_str::<Curriculum>(bad).is_err());
    }

    #[test]
    fn parity_alternates() {
        assert_eq!(Parity::of_term(1, Parity::Even), Parity::Even);
        assert_eq!(Parity::of_term(2, Parity::Even), Parity::Odd);
        assert_eq!(Parity::of_term(3, Parity::Odd), Parity::Odd);
    }
}
