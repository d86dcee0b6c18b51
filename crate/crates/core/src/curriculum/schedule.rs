//! Minimum completion time for an idealized student who passes every course
//! on the first attempt, and the delay added by a single failure.
//!
//! Both kinds of prerequisite become satisfied at the end of the term the
//! prerequisite is taken, so a dependent course can start one term later.
//! The search runs breadth-first over sets of completed courses, one layer per
//! term. Completing more courses never hurts, so each term only maximal
//! enrolments are expanded and dominated states are pruned. When a layer grows
//! past the state budget the greedy critical-path schedule is used instead.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::metrics::{betweenness_by_index, tail_lengths};
use super::{Curriculum, CurriculumError, Parity};

const STATE_BUDGET: usize = 4_000;
const EXPANSION_BUDGET: u64 = 400_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct CourseSet(Vec<u64>);

impl CourseSet {
    fn empty(n: usize) -> Self {
        CourseSet(alloc::vec![0; n.div_ceil(64)])
    }

    fn contains(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn is_subset(&self, other: &CourseSet) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & !b == 0)
    }
}

/// Course indices ordered by scheduling priority: longest remaining chain
/// first, then higher betweenness, then id.
pub(crate) fn selection_priority(cur: &Curriculum) -> Vec<usize> {
    let tail = tail_lengths(cur);
    let bc = betweenness_by_index(cur);
    let mut order: Vec<usize> = (0..cur.len()).collect();
    order.sort_by(|&a, &b| {
        tail[b]
            .cmp(&tail[a])
            .then(bc[b].partial_cmp(&bc[a]).unwrap_or(core::cmp::Ordering::Equal))
            .then(a.cmp(&b))
    });
    order
}

struct Problem<'a> {
    cur: &'a Curriculum,
    cap: usize,
    start: Parity,
    /// Course whose first attempt happens, and fails, in the given term.
    failure: Option<(usize, u32)>,
    /// Hard stop for the term loop.
    max_terms: u32,
}

impl<'a> Problem<'a> {
    fn new(cur: &'a Curriculum, cap: usize, start: Parity, failure: Option<(usize, u32)>) -> Result<Self, CurriculumError> {
        if cap == 0 {
            return Err(CurriculumError::InvalidLoadCap);
        }
        if let super::GraduationRule::CreditThreshold(t) = cur.graduation() {
            if t > cur.total_credits() {
                return Err(CurriculumError::Unschedulable(format!(
                    "credit threshold {t} exceeds the {} credits on offer",
                    cur.total_credits()
                )));
            }
        }
        let extra = failure.map_or(0, |(_, t)| t);
        let max_terms = 2 * cur.len() as u32 + 4 + extra;
        Ok(Self { cur, cap, start, failure, max_terms })
    }

    fn done(&self, s: &CourseSet) -> bool {
        self.cur.graduation_met(|i| s.contains(i))
    }

    fn available(&self, s: &CourseSet, term: u32) -> Vec<usize> {
        let parity = Parity::of_term(term, self.start);
        (0..self.cur.len())
            .filter(|&i| !s.contains(i))
            .filter(|&i| self.cur.course(i).offered_in(parity))
            .filter(|&i| self.cur.prerequisites(i).iter().all(|&(p, _)| s.contains(p)))
            .filter(|&i| match self.failure {
                Some((f, ft)) => i != f || term >= ft,
                None => true,
            })
            .collect()
    }

    fn unreachable(&self) -> CurriculumError {
        match self.failure {
            Some((_, t)) => CurriculumError::TermOutOfRange(t),
            None => CurriculumError::Unschedulable("no schedule completes the graduation rule".into()),
        }
    }

    /// Exact search. `Ok(None)` means the budget was exhausted; otherwise the
    /// passed-course sets of one optimal schedule, one per elapsed term.
    fn exact(&self) -> Result<Option<Vec<CourseSet>>, CurriculumError> {
        // Each layer keeps its states with the index of their parent state.
        let mut layers: Vec<Vec<(CourseSet, usize)>> = alloc::vec![alloc::vec![(CourseSet::empty(self.cur.len()), 0)]];
        let mut term = 0u32;
        loop {
            let layer = layers.last().expect("at least one layer");
            if let Some(end) = layer.iter().position(|(s, _)| self.done(s)) {
                let mut path = Vec::with_capacity(layers.len());
                let mut at = end;
                for l in layers.iter().rev() {
                    path.push(l[at].0.clone());
                    at = l[at].1;
                }
                path.reverse();
                return Ok(Some(path));
            }
            term += 1;
            if term > self.max_terms {
                return Err(self.unreachable());
            }
            let forced = self.failure.filter(|&(_, ft)| ft == term).map(|(f, _)| f);
            let mut next: BTreeMap<CourseSet, usize> = BTreeMap::new();
            let mut expansions = 0u64;
            for (parent, (s, _)) in layer.iter().enumerate() {
                let mut avail = self.available(s, term);
                let slots = match forced {
                    Some(f) => {
                        let Some(pos) = avail.iter().position(|&c| c == f) else { continue };
                        avail.remove(pos);
                        self.cap - 1
                    }
                    None => self.cap,
                };
                let take = slots.min(avail.len());
                expansions += binomial(avail.len() as u64, take as u64);
                if expansions > EXPANSION_BUDGET {
                    return Ok(None);
                }
                for_each_combination(avail.len(), take, |pick| {
                    let mut t = s.clone();
                    for &p in pick {
                        t.insert(avail[p]);
                    }
                    next.entry(t).or_insert(parent);
                });
            }
            if next.is_empty() {
                return Err(self.unreachable());
            }
            if next.len() > STATE_BUDGET {
                return Ok(None);
            }
            layers.push(prune_dominated(next.into_iter().collect()));
        }
    }

    fn greedy(&self, priority: &[usize]) -> Result<u32, CurriculumError> {
        let mut s = CourseSet::empty(self.cur.len());
        let mut term = 0u32;
        loop {
            if self.done(&s) {
                return Ok(term);
            }
            term += 1;
            if term > self.max_terms {
                return Err(self.unreachable());
            }
            let avail = self.available(&s, term);
            let mut slots = self.cap;
            let forced = self.failure.filter(|&(_, ft)| ft == term).map(|(f, _)| f);
            if let Some(f) = forced {
                if !avail.contains(&f) {
                    return Err(self.unreachable());
                }
                slots -= 1;
            }
            let picks: Vec<usize> = priority
                .iter()
                .copied()
                .filter(|c| avail.contains(c) && Some(*c) != forced)
                .take(slots)
                .collect();
            for c in picks {
                s.insert(c);
            }
        }
    }

    fn solve(&self) -> Result<u32, CurriculumError> {
        match self.exact()? {
            Some(path) => Ok(path.len() as u32 - 1),
            None => self.greedy(&selection_priority(self.cur)),
        }
    }
}

fn prune_dominated(states: Vec<(CourseSet, usize)>) -> Vec<(CourseSet, usize)> {
    let mut kept: Vec<(CourseSet, usize)> = Vec::with_capacity(states.len());
    // Larger sets first so a kept set is never dominated by a later one.
    let mut sorted = states;
    sorted.sort_by_key(|(s, _)| core::cmp::Reverse(s.0.iter().map(|w| w.count_ones()).sum::<u32>()));
    for (s, parent) in sorted {
        if !kept.iter().any(|(k, _)| s.is_subset(k)) {
            kept.push((s, parent));
        }
    }
    kept
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k.min(n));
    let mut r: u64 = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // Rightmost position that can still advance.
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Minimum number of terms for an always-passing student taking at most
/// `load_cap` courses per term, with term 1 on `start` parity.
pub fn min_completion_terms(cur: &Curriculum, load_cap: usize, start: Parity) -> Result<u32, CurriculumError> {
    Problem::new(cur, load_cap, start, None)?.solve()
}

/// Optimal completion time together with a course ranking that reproduces it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionPlan {
    pub terms: u32,
    /// Course indices ordered by the term they take in one optimal schedule,
    /// then by critical-path priority. Filling each term from the front of
    /// this list with every eligible course meets `terms` exactly.
    pub priority: Vec<usize>,
}

/// Like [`min_completion_terms`], and also returns the ranking a student can
/// follow term by term to finish in that time. Falls back to the critical-path
/// list schedule when the exact search runs out of budget.
pub fn completion_plan(cur: &Curriculum, load_cap: usize, start: Parity) -> Result<CompletionPlan, CurriculumError> {
    let problem = Problem::new(cur, load_cap, start, None)?;
    let fallback = selection_priority(cur);
    let Some(path) = problem.exact()? else {
        return Ok(CompletionPlan { terms: problem.greedy(&fallback)?, priority: fallback });
    };
    let planned = |c: usize| path.iter().position(|s| s.contains(c)).unwrap_or(usize::MAX);
    let rank: Vec<usize> = {
        let mut r = alloc::vec![0; cur.len()];
        fallback.iter().enumerate().for_each(|(i, &c)| r[c] = i);
        r
    };
    let mut priority: Vec<usize> = (0..cur.len()).collect();
    priority.sort_by_key(|&c| (planned(c), rank[c]));
    Ok(CompletionPlan { terms: path.len() as u32 - 1, priority })
}

/// Completion time of the list schedule that fills each term by the
/// critical-path priority alone.
pub fn greedy_completion_terms(cur: &Curriculum, load_cap: usize, start: Parity) -> Result<u32, CurriculumError> {
    Problem::new(cur, load_cap, start, None)?.greedy(&selection_priority(cur))
}

/// Extra terms caused by failing the first attempt of `failed_course` in
/// `fail_term`, relative to the unperturbed minimum.
pub fn delay_propagation(
    cur: &Curriculum,
    failed_course: &str,
    fail_term: u32,
    load_cap: usize,
    start: Parity,
) -> Result<u32, CurriculumError> {
    let f = cur
        .index_of(failed_course)
        .ok_or_else(|| CurriculumError::UnknownCourse(failed_course.into()))?;
    if fail_term == 0 {
        return Err(CurriculumError::TermOutOfRange(0));
    }
    let base = min_completion_terms(cur, load_cap, start)?;
    let perturbed = Problem::new(cur, load_cap, start, Some((f, fail_term)))?.solve()?;
    Ok(perturbed.saturating_sub(base))
}
