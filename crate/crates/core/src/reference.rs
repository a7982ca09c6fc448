//! Slow, literal re-implementations used as oracles by the test suites.
//!
//! Nothing here shares code with the production paths: Dempster's rule works
//! on explicit element sets, and the graph predicates enumerate subsets and
//! subset pairs directly instead of using bitmask tables.

use std::collections::{BTreeMap, BTreeSet};

use crate::digraph::DirectedGraph;
use crate::evidence::MassFunction;

type Subset = BTreeSet<usize>;

fn focal_sets(m: &MassFunction<f64>) -> Vec<(Subset, f64)> {
    let n = m.frame().len();
    m.masses()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(mask, &v)| ((0..n).filter(|k| mask & (1 << k) != 0).collect(), v))
        .collect()
}

/// Dempster's rule by enumerating every pair of focal sets. `None` on total conflict.
pub fn dempster_by_sets(m1: &MassFunction<f64>, m2: &MassFunction<f64>) -> Option<Vec<f64>> {
    let mut joint: BTreeMap<Subset, f64> = BTreeMap::new();
    let mut conflict = 0.0;
    for (b, x) in focal_sets(m1) {
        for (c, y) in focal_sets(m2) {
            let a: Subset = b.intersection(&c).copied().collect();
            if a.is_empty() {
                conflict += x * y;
            } else {
                *joint.entry(a).or_insert(0.0) += x * y;
            }
        }
    }
    if 1.0 - conflict <= 1e-12 {
        return None;
    }
    let mut out = vec![0.0; m1.masses().len()];
    for (a, v) in joint {
        let mask: usize = a.iter().map(|k| 1 << k).sum();
        out[mask] = v / (1.0 - conflict);
    }
    Some(out)
}

/// Conflict degree by the same pairwise enumeration.
pub fn conflict_by_sets(m1: &MassFunction<f64>, m2: &MassFunction<f64>) -> f64 {
    let mut k = 0.0;
    for (b, x) in focal_sets(m1) {
        for (c, y) in focal_sets(m2) {
            if b.is_disjoint(&c) {
                k += x * y;
            }
        }
    }
    k
}

fn reachable(g: &DirectedGraph, s: &[usize], p: f64) -> bool {
    s.iter().any(|&i| {
        let ins = g.in_neighbors(i).unwrap();
        let outside = ins.iter().filter(|j| !s.contains(j)).count();
        !ins.is_empty() && outside as f64 + 1e-12 >= p * ins.len() as f64
    })
}

fn members(mask: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|k| mask >> k & 1 == 1).collect()
}

/// Checks every ordered pair of disjoint non-empty subsets by assigning each
/// node to the first set, the second set, or neither.
pub fn naive_p_robust(g: &DirectedGraph, p: f64) -> bool {
    let n = g.n_nodes();
    if n < 2 {
        return true;
    }
    let total = 3usize.pow(n as u32);
    (0..total).all(|code| {
        let (mut s1, mut s2) = (Vec::new(), Vec::new());
        let mut c = code;
        for v in 0..n {
            match c % 3 {
                1 => s1.push(v),
                2 => s2.push(v),
                _ => {}
            }
            c /= 3;
        }
        s1.is_empty() || s2.is_empty() || reachable(g, &s1, p) || reachable(g, &s2, p)
    })
}

pub fn naive_strongly_p_robust(g: &DirectedGraph, p: f64) -> bool {
    let n = g.n_nodes();
    (1..1usize << n).all(|mask| {
        let s = members(mask, n);
        let rest: Vec<usize> = (0..n).filter(|v| !s.contains(v)).collect();
        reachable(g, &s, p)
            || s.iter().any(|&i| {
                let ins = g.in_neighbors(i).unwrap();
                rest.iter().all(|r| ins.contains(r))
            })
    })
}
