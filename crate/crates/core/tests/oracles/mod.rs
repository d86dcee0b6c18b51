//! Brute-force reference implementations used only by tests.
//!
//! Everything here works from the raw course and edge lists and enumerates
//! paths or schedules exhaustively; nothing is shared with the library's
//! algorithms.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use cohortlab_core::curriculum::{Course, Curriculum, EdgeKind, GraduationRule, Parity, PrereqEdge};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct RawGraph {
    pub ids: Vec<String>,
    pub succ: Vec<Vec<usize>>,
    pub pred: Vec<Vec<usize>>,
    pub offered: Vec<[bool; 2]>,
}

impl RawGraph {
    pub fn of(cur: &Curriculum) -> Self {
        let ids: Vec<String> = cur.courses().iter().map(|c| c.id.clone()).collect();
        let pos: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut succ = vec![Vec::new(); ids.len()];
        let mut pred = vec![Vec::new(); ids.len()];
        for e in cur.edges() {
            succ[pos[e.from.as_str()]].push(pos[e.to.as_str()]);
            pred[pos[e.to.as_str()]].push(pos[e.from.as_str()]);
        }
        let offered = cur
            .courses()
            .iter()
            .map(|c| [c.terms_offered.contains(&Parity::Odd), c.terms_offered.contains(&Parity::Even)])
            .collect();
        RawGraph { ids, succ, pred, offered }
    }

    fn n(&self) -> usize {
        self.ids.len()
    }
}

/// All SOURCE->SINK paths of the augmented graph, as course index lists.
pub fn all_entry_exit_paths(g: &RawGraph) -> Vec<Vec<usize>> {
    fn walk(g: &RawGraph, v: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        path.push(v);
        if g.succ[v].is_empty() {
            out.push(path.clone());
        }
        for &w in &g.succ[v] {
            walk(g, w, path, out);
        }
        path.pop();
    }
    let mut out = Vec::new();
    for s in (0..g.n()).filter(|&v| g.pred[v].is_empty()) {
        walk(g, s, &mut Vec::new(), &mut out);
    }
    out
}

pub fn backbone(g: &RawGraph) -> BTreeSet<String> {
    let paths = all_entry_exit_paths(g);
    let mut common: Option<BTreeSet<usize>> = None;
    for p in paths {
        let s: BTreeSet<usize> = p.into_iter().collect();
        common = Some(match common {
            None => s,
            Some(c) => c.intersection(&s).copied().collect(),
        });
    }
    common.unwrap_or_default().into_iter().map(|i| g.ids[i].clone()).collect()
}

/// Betweenness by enumerating every s->t path and keeping the shortest ones.
pub fn betweenness(g: &RawGraph) -> BTreeMap<String, f64> {
    fn paths(g: &RawGraph, v: usize, t: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        path.push(v);
        if v == t {
            out.push(path.clone());
        } else {
            for &w in &g.succ[v] {
                paths(g, w, t, path, out);
            }
        }
        path.pop();
    }
    let n = g.n();
    let mut score = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            let mut all = Vec::new();
            paths(g, s, t, &mut Vec::new(), &mut all);
            let Some(min) = all.iter().map(Vec::len).min() else { continue };
            let shortest: Vec<&Vec<usize>> = all.iter().filter(|p| p.len() == min).collect();
            let total = shortest.len() as f64;
            for v in 0..n {
                if v == s || v == t {
                    continue;
                }
                let through = shortest.iter().filter(|p| p.contains(&v)).count() as f64;
                score[v] += through / total;
            }
        }
    }
    g.ids.iter().cloned().zip(score).collect()
}

/// Longest path length in courses by enumerating every path from every node.
pub fn longest_chain_len(g: &RawGraph) -> usize {
    fn depth(g: &RawGraph, v: usize) -> usize {
        1 + g.succ[v].iter().map(|&w| depth(g, w)).max().unwrap_or(0)
    }
    (0..g.n()).map(|v| depth(g, v)).max().unwrap_or(0)
}

fn parity_index(term: u32, start: Parity) -> usize {
    let odd_start = start == Parity::Odd;
    let is_start = term % 2 == 1;
    if is_start == odd_start {
        0
    } else {
        1
    }
}

/// Exhaustive scheduler: every subset of the available courses up to `cap`
/// is tried each term (including taking fewer courses than allowed).
/// `failure = Some((course, term))` forces the first attempt of `course` into
/// `term` and makes it fail. Requires all courses to be passed. Returns `None`
/// if no schedule exists within `limit` terms.
pub fn exhaustive_schedule(g: &RawGraph, cap: usize, start: Parity, failure: Option<(usize, u32)>, limit: u32) -> Option<u32> {
    let n = g.n();
    let full: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut layer: HashSet<u64> = HashSet::from([0u64]);
    for term in 0..=limit {
        if layer.contains(&full) {
            return Some(term);
        }
        let next_term = term + 1;
        let p = parity_index(next_term, start);
        let mut next = HashSet::new();
        for &s in &layer {
            let avail: Vec<usize> = (0..n)
                .filter(|&c| s >> c & 1 == 0)
                .filter(|&c| g.offered[c][p])
                .filter(|&c| g.pred[c].iter().all(|&q| s >> q & 1 == 1))
                .filter(|&c| match failure {
                    Some((f, ft)) => c != f || next_term >= ft,
                    None => true,
                })
                .collect();
            let forced = failure.filter(|&(_, ft)| ft == next_term).map(|(f, _)| f);
            if let Some(f) = forced {
                if !avail.contains(&f) {
                    continue;
                }
            }
            let rest: Vec<usize> = avail.iter().copied().filter(|&c| Some(c) != forced).collect();
            let slots = cap - usize::from(forced.is_some());
            for mask in 0u32..(1u32 << rest.len()) {
                if mask.count_ones() as usize > slots {
                    continue;
                }
                let mut t = s;
                for (k, &c) in rest.iter().enumerate() {
                    if mask >> k & 1 == 1 {
                        t |= 1 << c;
                    }
                }
                next.insert(t);
            }
        }
        layer = next;
        if layer.is_empty() {
            return None;
        }
    }
    None
}

pub struct DagParams {
    pub max_nodes: usize,
    pub max_edges: usize,
    pub single_parity_prob: f64,
}

/// Random DAG with shuffled ids so index order is not topological.
pub fn random_dag(seed: u64, p: &DagParams) -> Curriculum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=p.max_nodes);
    let mut labels: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    let id = |i: usize| format!("C{:02}", labels[i]);
    let courses: Vec<Course> = (0..n)
        .map(|i| {
            let terms_offered = if rng.random_bool(p.single_parity_prob) {
                [if rng.random_bool(0.5) { Parity::Odd } else { Parity::Even }].into_iter().collect()
            } else {
                [Parity::Odd, Parity::Even].into_iter().collect()
            };
            Course { id: id(i), name: id(i), credits: 6.0, terms_offered, base_difficulty: 0.0 }
        })
        .collect();
    let mut pairs = BTreeSet::new();
    if n > 1 {
        let want = rng.random_range(0..=p.max_edges.min(n * (n - 1) / 2));
        let mut tries = 0;
        while pairs.len() < want && tries < 500 {
            tries += 1;
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a < b {
                pairs.insert((a, b));
            }
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(a, b)| PrereqEdge {
            from: id(a),
            to: id(b),
            kind: if rng.random_bool(0.5) { EdgeKind::RequiresPassed } else { EdgeKind::RequiresRegularized },
        })
        .collect();
    Curriculum::build(courses, edges, GraduationRule::AllCoursesPassed).expect("forward edges are acyclic")
}
