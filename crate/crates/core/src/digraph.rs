//! Directed communication graphs and the robustness predicates used to
//! reason about resilient information spread.
//!
//! Nodes are indexed `0..n` in the API. Every file format counts from 1.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest graph the subset-enumeration predicates accept.
pub const MAX_ENUMERATION_NODES: usize = 20;

// Slack on `count >= p * degree` so fractions like 1/3 compare as intended.
const FRACTION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("node {0} does not exist")]
    InvalidNode(usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge {from} -> {to} listed twice")]
    DuplicateEdge { from: usize, to: usize },
    #[error("subset must be non-empty")]
    EmptySubset,
    #[error("subset enumeration is limited to {MAX_ENUMERATION_NODES} nodes; graph has {0}")]
    ExplainedLimit(usize),
}

/// A node identifier that is 0-based in memory and 1-based when printed or serialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }

    /// Builds an id from its 1-based display form.
    pub fn from_one_based(label: usize) -> Option<Self> {
        label.checked_sub(1).map(NodeId)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0 + 1)
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u64(self.0 as u64 + 1)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let label = u64::deserialize(deserializer)?;
        NodeId::from_one_based(label as usize).ok_or_else(|| serde::de::Error::custom("node ids start at 1"))
    }
}

/// Semantics of the f-fraction local attack bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FLocalSemantics {
    /// Attackers among the in-neighbors of each normal node.
    #[default]
    Neighborhood,
    /// Total attacker count, compared against each normal node's in-degree.
    LiteralGlobal,
}

/// Directed graph without self-loops. An edge `(j, i)` means `i` receives from `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    adj: Vec<bool>,
    in_nbrs: Vec<Vec<usize>>,
    out_nbrs: Vec<Vec<usize>>,
}

impl DirectedGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adj: vec![false; n * n],
            in_nbrs: vec![Vec::new(); n],
            out_nbrs: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from `(from, to)` pairs, 0-based.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = Self::empty(n);
        for &(from, to) in edges {
            if g.has_edge(from, to)? {
                return Err(GraphError::DuplicateEdge { from, to });
            }
            g.add_edge(from, to)?;
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    g.insert(a, b);
                }
            }
        }
        g
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn ring(n: usize) -> Self {
        let mut g = Self::empty(n);
        if n >= 2 {
            for a in 0..n {
                g.insert(a, (a + 1) % n);
            }
        }
        g
    }

    fn check(&self, node: usize) -> Result<(), GraphError> {
        if node < self.n {
            Ok(())
        } else {
            Err(GraphError::InvalidNode(node))
        }
    }

    fn insert(&mut self, from: usize, to: usize) {
        let k = to * self.n + from;
        if !self.adj[k] {
            self.adj[k] = true;
            let ins = &mut self.in_nbrs[to];
            ins.insert(ins.partition_point(|&x| x < from), from);
            let outs = &mut self.out_nbrs[from];
            outs.insert(outs.partition_point(|&x| x < to), to);
        }
    }

    /// Adds `from -> to`; adding an existing edge is a no-op.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<(), GraphError> {
        self.check(from)?;
        self.check(to)?;
        if from == to {
            return Err(GraphError::SelfLoop(from));
        }
        self.insert(from, to);
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, from: usize, to: usize) -> Result<bool, GraphError> {
        self.check(from)?;
        self.check(to)?;
        Ok(self.adj[to * self.n + from])
    }

    pub fn in_neighbors(&self, i: usize) -> Result<&[usize], GraphError> {
        self.check(i)?;
        Ok(&self.in_nbrs[i])
    }

    pub fn out_neighbors(&self, i: usize) -> Result<&[usize], GraphError> {
        self.check(i)?;
        Ok(&self.out_nbrs[i])
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_nbrs[i].len()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_nbrs[i].len()
    }

    /// Edges as `(from, to)` pairs, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = (0..self.n)
            .flat_map(|from| self.out_nbrs[from].iter().map(move |&to| (from, to)))
            .collect();
        e.sort_unstable();
        e
    }

    pub fn edge_count(&self) -> usize {
        self.in_nbrs.iter().map(Vec::len).sum()
    }

    /// Subgraph induced by `keep` (sorted, deduplicated); node `k` of the result
    /// is `keep[k]` of `self`.
    pub fn induced(&self, keep: &[usize]) -> Result<DirectedGraph, GraphError> {
        let mut map = vec![usize::MAX; self.n];
        for (k, &v) in keep.iter().enumerate() {
            self.check(v)?;
            map[v] = k;
        }
        let mut g = Self::empty(keep.len());
        for &v in keep {
            for &u in &self.out_nbrs[v] {
                if map[u] != usize::MAX {
                    g.insert(map[v], map[u]);
                }
            }
        }
        Ok(g)
    }

    /// Every node reaches every other node along directed edges.
    pub fn is_strongly_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let reach = |nbrs: &Vec<Vec<usize>>| {
            let mut seen = vec![false; self.n];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(v) = stack.pop() {
                for &u in &nbrs[v] {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(&self.out_nbrs) && reach(&self.in_nbrs)
    }

    fn in_masks(&self) -> Result<Vec<u32>, GraphError> {
        if self.n > MAX_ENUMERATION_NODES {
            return Err(GraphError::ExplainedLimit(self.n));
        }
        Ok(self
            .in_nbrs
            .iter()
            .map(|ins| ins.iter().fold(0u32, |m, &j| m | 1 << j))
            .collect())
    }

    /// Reachability of every subset mask, `O(n · 2^n)`.
    fn reachable_table(&self, p: f64) -> Result<Vec<bool>, GraphError> {
        let masks = self.in_masks()?;
        let full = 1usize << self.n;
        let mut table = vec![false; full];
        for (s, slot) in table.iter_mut().enumerate().skip(1) {
            *slot = (0..self.n).any(|i| s >> i & 1 == 1 && node_reaches_out(masks[i], s as u32, p));
        }
        Ok(table)
    }

    /// Some member of `s` has a non-empty in-neighborhood of which at least a
    /// `p` fraction lies outside `s`.
    pub fn is_p_fraction_reachable(&self, s: &[usize], p: f64) -> Result<bool, GraphError> {
        if s.is_empty() {
            return Err(GraphError::EmptySubset);
        }
        let mut inside = vec![false; self.n];
        for &v in s {
            self.check(v)?;
            inside[v] = true;
        }
        Ok(s.iter().any(|&i| {
            let deg = self.in_nbrs[i].len();
            let outside = self.in_nbrs[i].iter().filter(|&&j| !inside[j]).count();
            deg > 0 && fraction_met(outside, deg, p)
        }))
    }

    /// Among any two disjoint non-empty subsets, at least one is p-fraction reachable.
    pub fn is_p_fraction_robust(&self, p: f64) -> Result<bool, GraphError> {
        if self.n < 2 {
            return Ok(true);
        }
        let reachable = self.reachable_table(p)?;
        let full = (1usize << self.n) - 1;
        // contains_unreachable[t]: some non-empty subset of t is unreachable.
        let mut contains_unreachable: Vec<bool> = reachable.iter().map(|r| !r).collect();
        contains_unreachable[0] = false;
        for bit in 0..self.n {
            for t in 0..=full {
                if t >> bit & 1 == 1 && contains_unreachable[t ^ (1 << bit)] {
                    contains_unreachable[t] = true;
                }
            }
        }
        Ok((1..=full).all(|s| reachable[s] || !contains_unreachable[full ^ s]))
    }

    /// Every non-empty subset is p-fraction reachable or holds a node that
    /// hears from everything outside it.
    pub fn is_strongly_p_fraction_robust(&self, p: f64) -> Result<bool, GraphError> {
        let reachable = self.reachable_table(p)?;
        let masks = self.in_masks()?;
        let full = (1u32 << self.n) - 1;
        Ok((1..=full)
            .all(|s| reachable[s as usize] || (0..self.n).any(|i| s >> i & 1 == 1 && (full ^ s) & !masks[i] == 0)))
    }

    /// Whether every normal node's in-neighborhood respects the f-fraction attacker bound.
    pub fn satisfies_f_fraction_local(
        &self,
        attackers: &[usize],
        f: f64,
        semantics: FLocalSemantics,
    ) -> Result<bool, GraphError> {
        let mut is_attacker = vec![false; self.n];
        for &a in attackers {
            self.check(a)?;
            is_attacker[a] = true;
        }
        let total = attackers.iter().collect::<std::collections::BTreeSet<_>>().len();
        Ok((0..self.n).filter(|&i| !is_attacker[i]).all(|i| {
            let deg = self.in_nbrs[i].len() as f64;
            let count = match semantics {
                FLocalSemantics::Neighborhood => self.in_nbrs[i].iter().filter(|&&j| is_attacker[j]).count(),
                FLocalSemantics::LiteralGlobal => total,
            };
            count as f64 <= f * deg + FRACTION_SLACK
        }))
    }
}

fn fraction_met(count: usize, degree: usize, p: f64) -> bool {
    count as f64 + FRACTION_SLACK >= p * degree as f64
}

fn node_reaches_out(in_mask: u32, s: u32, p: f64) -> bool {
    let deg = in_mask.count_ones() as usize;
    deg > 0 && fraction_met((in_mask & !s).count_ones() as usize, deg, p)
}

/// Each ordered pair becomes an edge independently with probability `density`.
pub fn random_digraph<R: Rng + ?Sized>(n: usize, density: f64, rng: &mut R) -> DirectedGraph {
    let mut g = DirectedGraph::empty(n);
    for from in 0..n {
        for to in 0..n {
            if from != to && rng.random_bool(density.clamp(0.0, 1.0)) {
                g.insert(from, to);
            }
        }
    }
    g
}

/// A random Hamiltonian cycle plus independent extra edges with probability `density`.
pub fn random_strongly_connected<R: Rng + ?Sized>(n: usize, density: f64, rng: &mut R) -> DirectedGraph {
    let mut g = random_digraph(n, density, rng);
    if n >= 2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for k in 0..n {
            g.insert(order[k], order[(k + 1) % n]);
        }
    }
    g
}

/// A random spanning tree plus extra undirected edges with probability
/// `density`; every edge is present in both directions.
pub fn random_connected_undirected<R: Rng + ?Sized>(n: usize, density: f64, rng: &mut R) -> DirectedGraph {
    let mut g = DirectedGraph::empty(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        g.insert(order[k], parent);
        g.insert(parent, order[k]);
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(density.clamp(0.0, 1.0)) {
                g.insert(a, b);
                g.insert(b, a);
            }
        }
    }
    g
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl Serialize for DirectedGraph {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        GraphFile {
            n: self.n,
            edges: self.edges().into_iter().map(|(j, i)| [j + 1, i + 1]).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DirectedGraph {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let file = GraphFile::deserialize(deserializer)?;
        let mut edges = Vec::with_capacity(file.edges.len());
        for [j, i] in file.edges {
            if j == 0 || i == 0 || j > file.n || i > file.n {
                return Err(D::Error::custom(format!(
                    "edge [{j}, {i}] outside nodes 1..={}",
                    file.n
                )));
            }
            edges.push((j - 1, i - 1));
        }
        DirectedGraph::from_edges(file.n, &edges).map_err(|e| D::Error::custom(one_based(e)))
    }
}

// Graph errors carry 0-based indices; files use 1-based ones.
fn one_based(e: GraphError) -> String {
    match e {
        GraphError::SelfLoop(v) => format!("self-loop on node {}", v + 1),
        GraphError::DuplicateEdge { from, to } => format!("edge [{}, {}] listed twice", from + 1, to + 1),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn neighbor_queries() {
        let g = DirectedGraph::empty(3);
        assert!(g.in_neighbors(1).unwrap().is_empty());
        let k3 = DirectedGraph::complete(3);
        assert_eq!(k3.in_neighbors(0).unwrap(), &[1, 2]);
        assert_eq!(g.in_neighbors(3), Err(GraphError::InvalidNode(3)));
        let g = DirectedGraph::from_edges(3, &[(0, 1), (2, 1)]).unwrap();
        assert_eq!(g.in_neighbors(1).unwrap(), &[0, 2]);
        assert_eq!(g.out_neighbors(0).unwrap(), &[1]);
    }

    #[test]
    fn construction_rejects_bad_edges() {
        assert_eq!(DirectedGraph::from_edges(2, &[(1, 1)]), Err(GraphError::SelfLoop(1)));
        assert!(matches!(
            DirectedGraph::from_edges(2, &[(0, 1), (0, 1)]),
            Err(GraphError::DuplicateEdge { .. })
        ));
        assert_eq!(DirectedGraph::from_edges(2, &[(0, 2)]), Err(GraphError::InvalidNode(2)));
    }

    #[test]
    fn reachability_cases() {
        let k3 = DirectedGraph::complete(3);
        assert!(!k3.is_p_fraction_reachable(&[0, 1, 2], 0.5).unwrap());
        assert!(k3.is_p_fraction_reachable(&[0], 1.0).unwrap());
        let isolated = DirectedGraph::empty(2);
        assert!(!isolated.is_p_fraction_reachable(&[0], 0.0).unwrap());
        assert_eq!(k3.is_p_fraction_reachable(&[], 0.5), Err(GraphError::EmptySubset));
    }

    #[test]
    fn robustness_cases() {
        assert!(DirectedGraph::empty(1).is_p_fraction_robust(0.7).unwrap());
        assert!(!DirectedGraph::empty(2).is_p_fraction_robust(0.1).unwrap());
        assert!(DirectedGraph::complete(4).is_p_fraction_robust(1.0 / 3.0).unwrap());
        assert!(DirectedGraph::complete(3).is_strongly_p_fraction_robust(1.0).unwrap());
        // Every proper subset of a directed ring has a member whose predecessor
        // lies outside it, and the full set passes vacuously.
        assert!(DirectedGraph::ring(4).is_strongly_p_fraction_robust(1.0).unwrap());
        assert!(!DirectedGraph::empty(2).is_strongly_p_fraction_robust(0.1).unwrap());
        let path = DirectedGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(!path.is_strongly_p_fraction_robust(0.5).unwrap());
        assert_eq!(
            DirectedGraph::empty(21).is_p_fraction_robust(0.5),
            Err(GraphError::ExplainedLimit(21))
        );
    }

    #[test]
    fn f_local_cases() {
        let g = DirectedGraph::from_edges(3, &[(0, 1), (1, 2), (2, 1)]).unwrap();
        assert!(g
            .satisfies_f_fraction_local(&[], 0.0, FLocalSemantics::Neighborhood)
            .unwrap());
        assert!(!g
            .satisfies_f_fraction_local(&[0], 0.0, FLocalSemantics::Neighborhood)
            .unwrap());
        assert!(g
            .satisfies_f_fraction_local(&[0], 0.5, FLocalSemantics::Neighborhood)
            .unwrap());
        // Node 2 hears only from node 1, so one attacker anywhere exceeds half its in-degree.
        assert!(!g
            .satisfies_f_fraction_local(&[0], 0.5, FLocalSemantics::LiteralGlobal)
            .unwrap());
    }

    #[test]
    fn generators_and_induced_subgraphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..12 {
            assert!(random_strongly_connected(n, 0.1, &mut rng).is_strongly_connected());
            let u = random_connected_undirected(n, 0.2, &mut rng);
            assert!(u.is_strongly_connected());
            assert!(u.edges().iter().all(|&(a, b)| u.has_edge(b, a).unwrap()));
        }
        let ring = DirectedGraph::ring(4);
        let sub = ring.induced(&[0, 1, 3]).unwrap();
        assert_eq!(sub.edges(), vec![(0, 1), (2, 0)]);
        assert!(!sub.is_strongly_connected());
    }

    #[test]
    fn json_is_one_based() {
        let g = DirectedGraph::from_edges(3, &[(0, 1), (2, 0)]).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, r#"{"n":3,"edges":[[1,2],[3,1]]}"#);
        let back: DirectedGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<DirectedGraph>(r#"{"n":2,"edges":[[0,1]]}"#).is_err());
        assert!(serde_json::from_str::<DirectedGraph>(r#"{"n":2,"edges":[[2,2]]}"#).is_err());
    }

    #[test]
    fn node_id_displays_one_based() {
        assert_eq!(NodeId(0).to_string(), "1");
        assert_eq!(serde_json::to_string(&NodeId(5)).unwrap(), "6");
        assert_eq!(serde_json::from_str::<NodeId>("6").unwrap(), NodeId(5));
        assert!(serde_json::from_str::<NodeId>("0").is_err());
    }
}
