//! Structural metrics over the prerequisite DAG.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Curriculum;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    /// Number of courses on the path.
    pub length: usize,
    pub path: Vec<String>,
}

/// Longest path length, in courses, starting at each course.
pub fn tail_lengths(cur: &Curriculum) -> Vec<usize> {
    let mut tail = vec![0usize; cur.len()];
    for &v in cur.topological_order().iter().rev() {
        tail[v] = 1 + cur.successors(v).iter().map(|&w| tail[w]).max().unwrap_or(0);
    }
    tail
}

/// Longest directed path measured in courses. Among equally long paths the
/// lexicographically smallest id sequence wins.
pub fn longest_chain(cur: &Curriculum) -> Chain {
    if cur.is_empty() {
        return Chain { length: 0, path: Vec::new() };
    }
    let tail = tail_lengths(cur);
    let length = *tail.iter().max().expect("nonempty");
    // Indices follow id order, so the first index with a maximal tail is the
    // smallest id, and likewise for each successor step.
    let mut v = (0..cur.len()).find(|&i| tail[i] == length).expect("max exists");
    let mut path = vec![cur.course(v).id.clone()];
    while tail[v] > 1 {
        v = *cur
            .successors(v)
            .iter()
            .find(|&&w| tail[w] == tail[v] - 1)
            .expect("a successor continues the chain");
        path.push(cur.course(v).id.clone());
    }
    Chain { length, path }
}

/// Courses that every path from a virtual entry node (before all courses
/// without prerequisites) to a virtual exit node (after all courses without
/// dependents) passes through.
///
/// A course is on every such path iff deleting it disconnects entry from exit.
pub fn backbone_courses(cur: &Curriculum) -> BTreeSet<String> {
    let n = cur.len();
    let mut indeg = vec![0usize; n];
    for v in 0..n {
        for &w in cur.successors(v) {
            indeg[w] += 1;
        }
    }
    let mut out = BTreeSet::new();
    for removed in 0..n {
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for v in 0..n {
            if v != removed && indeg[v] == 0 {
                seen[v] = true;
                queue.push_back(v);
            }
        }
        let mut reaches_exit = false;
        while let Some(v) = queue.pop_front() {
            if cur.successors(v).is_empty() {
                reaches_exit = true;
                break;
            }
            for &w in cur.successors(v) {
                if w != removed && !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if !reaches_exit {
            out.insert(cur.course(removed).id.clone());
        }
    }
    out
}

/// Unnormalized directed betweenness (Brandes) with unit edge weights, over
/// all ordered pairs of distinct courses.
pub fn bottleneck_scores(cur: &Curriculum) -> BTreeMap<String, f64> {
    let raw = betweenness_by_index(cur);
    cur.courses().iter().zip(raw).map(|(c, b)| (c.id.clone(), b)).collect()
}

pub(crate) fn betweenness_by_index(cur: &Curriculum) -> Vec<f64> {
    let n = cur.len();
    let mut bc = vec![0.0f64; n];
    let mut stack = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0f64; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        stack.clear();
        for v in 0..n {
            preds[v].clear();
            sigma[v] = 0.0;
            dist[v] = -1;
            delta[v] = 0.0;
        }
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in cur.successors(v) {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    bc
}
