//! Friction: the share of a student's gating prerequisites that were
//! attempted without reaching the status their edges require.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Curriculum, CurriculumError, EdgeKind};
use crate::temporal::{CourseOutcome, StudentRecord};

/// Best status reached in a course so far. Ordered by progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CourseStatus {
    Untaken,
    Attempted,
    Regularized,
    Passed,
}

impl CourseStatus {
    pub fn satisfies(self, kind: EdgeKind) -> bool {
        match kind {
            EdgeKind::RequiresRegularized => self >= CourseStatus::Regularized,
            EdgeKind::RequiresPassed => self == CourseStatus::Passed,
        }
    }

    pub fn after(self, outcome: Option<CourseOutcome>) -> CourseStatus {
        let reached = match outcome {
            Some(CourseOutcome::Passed) => CourseStatus::Passed,
            Some(CourseOutcome::Regularized) => CourseStatus::Regularized,
            Some(CourseOutcome::Failed) | Some(CourseOutcome::Withdrawn) | None => CourseStatus::Attempted,
        };
        self.max(reached)
    }
}

/// Friction for a per-course status vector indexed like `cur.courses()`.
///
/// Denominator: distinct prerequisites of courses not yet passed. Numerator:
/// those among them that were attempted but fall short of what at least one
/// such edge requires. Zero when nothing gates the remaining plan.
pub fn friction_from_status(cur: &Curriculum, status: &[CourseStatus]) -> f64 {
    let mut gating = BTreeSet::new();
    let mut unmet = BTreeSet::new();
    for to in 0..cur.len() {
        if status[to] == CourseStatus::Passed {
            continue;
        }
        for &(from, kind) in cur.prerequisites(to) {
            gating.insert(from);
            if status[from] != CourseStatus::Untaken && !status[from].satisfies(kind) {
                unmet.insert(from);
            }
        }
    }
    if gating.is_empty() {
        0.0
    } else {
        unmet.len() as f64 / gating.len() as f64
    }
}

/// Status of every course after all snapshots up to and including `term`.
pub fn course_status_at(
    record: &StudentRecord,
    cur: &Curriculum,
    term: u32,
) -> Result<Vec<CourseStatus>, CurriculumError> {
    let last = record.n3.last().map_or(0, |s| s.term);
    if term == 0 || term > last {
        return Err(CurriculumError::TermOutOfRange(term));
    }
    let mut status = vec![CourseStatus::Untaken; cur.len()];
    for snap in record.n3.iter().take_while(|s| s.term <= term) {
        for c in &snap.enrollments {
            let i = cur.index_of(c).ok_or_else(|| CurriculumError::UnknownCourse(c.clone()))?;
            status[i] = status[i].after(snap.outcomes.get(c).copied());
        }
        for (c, o) in &snap.outcomes {
            let i = cur.index_of(c).ok_or_else(|| CurriculumError::UnknownCourse(c.clone()))?;
            status[i] = status[i].after(Some(*o));
        }
    }
    Ok(status)
}

/// Friction index of a recorded student at `term`.
pub fn friction_index(record: &StudentRecord, cur: &Curriculum, term: u32) -> Result<f64, CurriculumError> {
    Ok(friction_from_status(cur, &course_status_at(record, cur, term)?))
}
