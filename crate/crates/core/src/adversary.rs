//! Attacker behaviors and eavesdropper analysis.
//!
//! DoS attackers drop everything. Deceivers take part in the share exchange,
//! then tamper with their reconstructed state and relay perturbed storage
//! vectors; every out-neighbor receives the same payload. Eavesdroppers never
//! touch traffic; [`eavesdrop_reconstruct`] decides whether what they saw pins
//! down a node's initial state.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digraph::{DirectedGraph, NodeId};
use crate::protocol::{max_abs_diff, AttackKind, LocalRecords, Message, Payload, StorageVector, WeightPayload};

pub use crate::protocol::AttackKind as AttackerKind;

/// Relative size of the default perturbation.
pub const DEFAULT_AMPLITUDE: f64 = 0.1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptKind {
    /// Fresh uniform noise on every relayed value, every round.
    #[default]
    UniformNoise,
    /// A fixed offset on every relayed value.
    ConstantLie,
    /// The attacker's own state replayed into every relayed slot.
    Replay,
}

/// Attacker declaration as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackerSpec {
    pub node: NodeId,
    pub kind: AttackKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<ScriptKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

/// Seeded generator behind a deceiver's payloads.
#[derive(Debug, Clone)]
pub struct DeceptionScript {
    kind: ScriptKind,
    amplitude: f64,
    rng: ChaCha8Rng,
}

impl DeceptionScript {
    pub fn new(kind: ScriptKind, amplitude: f64, seed: u64) -> Self {
        Self {
            kind,
            amplitude,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn kind(&self) -> ScriptKind {
        self.kind
    }

    fn perturb(&mut self, v: &[f64]) -> Vec<f64> {
        let scale = self.amplitude * v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-3);
        match self.kind {
            ScriptKind::UniformNoise => v
                .iter()
                .map(|x| x + scale * self.rng.random_range(-1.0..=1.0))
                .collect(),
            ScriptKind::ConstantLie => v.iter().map(|x| x + scale).collect(),
            ScriptKind::Replay => v.to_vec(),
        }
    }

    /// The falsified reconstructed state the deceiver records and advertises.
    pub fn tamper_state(&mut self, x1: &[f64]) -> Vec<f64> {
        self.perturb(x1)
    }

    /// Storage vector to broadcast this round. The own slot is left as is;
    /// every other filled slot is falsified.
    pub fn storage_payload(&mut self, storage: &StorageVector, own: usize) -> StorageVector {
        let mut out = storage.clone();
        let own_value = storage.get(own).cloned();
        for k in 0..storage.len() {
            if k == own {
                continue;
            }
            if let Some(v) = storage.get(k) {
                let lie = match (self.kind, &own_value) {
                    (ScriptKind::Replay, Some(mine)) => mine.clone(),
                    _ => Arc::new(self.perturb(v)),
                };
                out.set(k, Some(lie));
            }
        }
        out
    }
}

/// A DoS attacker sends nothing and ignores its inbox.
pub fn dos_behavior(_round: usize, _inbox: &[Message]) -> Vec<Message> {
    Vec::new()
}

/// Checks that a sender's messages of one round carry the same payload to
/// every recipient. Weight ciphertexts are exempt: they differ per key.
pub fn identical_payloads(outbox: &[Message]) -> bool {
    let mut first: BTreeMap<_, &Payload> = BTreeMap::new();
    outbox.iter().all(|m| {
        if matches!(m.payload, Payload::Weight(WeightPayload::Encrypted(_))) {
            return true;
        }
        match first.get(&m.kind()) {
            None => {
                first.insert(m.kind(), &m.payload);
                true
            }
            Some(p) => **p == m.payload,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum EavesdropperKind {
    /// A protocol participant reading its own traffic.
    Internal { node: NodeId },
    /// An outsider reading every link, without private keys.
    External,
}

/// What an eavesdropper learned by the end of round 1, plus the
/// reconstructed states later replicated through storage.
#[derive(Debug, Clone, PartialEq)]
pub struct EavesdropperView {
    pub kind: EavesdropperKind,
    /// Edges `(from, to)` of the topology.
    pub edges: Vec<(usize, usize)>,
    pub n_nodes: usize,
    /// Shares seen on edges.
    pub shares: BTreeMap<(usize, usize), Vec<f64>>,
    /// Kept shares the observer knows (its own, for an insider).
    pub own_shares: BTreeMap<usize, Vec<f64>>,
    /// Edge weights the observer can read.
    pub weights: BTreeMap<(usize, usize), f64>,
    /// Weight ciphertexts seen but not readable.
    pub ciphertexts: BTreeSet<(usize, usize)>,
    /// Reconstructed states `x_a(1)`.
    pub reconstructed: BTreeMap<usize, Vec<f64>>,
}

impl EavesdropperView {
    /// What node `h` holds: its shares, its own and decrypted weights, and
    /// its storage slots.
    pub fn internal(
        h: usize,
        graph: &DirectedGraph,
        own_share: &[f64],
        records: &LocalRecords,
        storage: &StorageVector,
    ) -> Self {
        let mut view = Self::empty(EavesdropperKind::Internal { node: NodeId(h) }, graph);
        view.own_shares.insert(h, own_share.to_vec());
        for (&b, (share, w)) in &records.sent {
            view.shares.insert((h, b), share.clone());
            view.weights.insert((h, b), *w);
        }
        for (&j, (share, w)) in &records.received {
            view.shares.insert((j, h), share.clone());
            view.weights.insert((j, h), *w);
        }
        for (a, slot) in storage.slots().iter().enumerate() {
            if let Some(v) = slot {
                view.reconstructed.insert(a, v.to_vec());
            }
        }
        view
    }

    /// What an outsider reads from the traffic log: every share, plaintext
    /// weights when encryption is off, and each node's advertised own slot.
    pub fn external(graph: &DirectedGraph, log: &[Message]) -> Self {
        let mut view = Self::empty(EavesdropperKind::External, graph);
        for m in log {
            match &m.payload {
                Payload::SubState(v) => {
                    view.shares.insert((m.from, m.to), v.to_vec());
                }
                Payload::Weight(WeightPayload::Plain(code)) => {
                    view.weights
                        .insert((m.from, m.to), *code as f64 / crate::paillier::WEIGHT_SCALE as f64);
                }
                Payload::Weight(WeightPayload::Encrypted(_)) => {
                    view.ciphertexts.insert((m.from, m.to));
                }
                Payload::Storage(s) => {
                    if let Some(v) = s.get(m.from) {
                        view.reconstructed.entry(m.from).or_insert_with(|| v.to_vec());
                    }
                }
                Payload::Correction(_) => {}
            }
        }
        view
    }

    fn empty(kind: EavesdropperKind, graph: &DirectedGraph) -> Self {
        Self {
            kind,
            edges: graph.edges(),
            n_nodes: graph.n_nodes(),
            shares: BTreeMap::new(),
            own_shares: BTreeMap::new(),
            weights: BTreeMap::new(),
            ciphertexts: BTreeSet::new(),
            reconstructed: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "verdict")]
pub enum PrivacyVerdict {
    /// The observations fix the target's initial state to this value.
    Determined { estimate: Vec<f64> },
    /// Two initial states consistent with every observation, when a witness was requested.
    Underdetermined { witness: Option<[Vec<f64>; 2]> },
}

impl PrivacyVerdict {
    pub fn is_determined(&self) -> bool {
        matches!(self, PrivacyVerdict::Determined { .. })
    }
}

const RANK_TOL: f64 = 1e-9;

/// Decides whether the view determines `x_target(0)`.
///
/// Unknowns are every kept share, every share not seen on the wire, and the
/// product `ς · share` on each edge whose weight the observer cannot read.
/// Each observed `x_a(1)` is a linear equation in those unknowns, as is each
/// known share and kept share. The target `x_i(0) = kept_i + Σ_out shares`
/// is determined exactly when it is orthogonal to the null space of the
/// observation matrix. Treating unknown products as free variables is the
/// linear relaxation of the problem; near any actual run the products can be
/// moved independently by nudging the weights inside `(0, 1)`.
pub fn eavesdrop_reconstruct(view: &EavesdropperView, target: usize, with_witness: bool) -> PrivacyVerdict {
    PrivacyAnalysis::new(view).verdict(target, with_witness)
}

/// The reduced observation system of one view, reusable across targets.
pub struct PrivacyAnalysis {
    sys: LinearSystem,
    null: Vec<Vec<f64>>,
    solutions: Vec<Vec<f64>>,
    edges: Vec<(usize, usize)>,
}

impl PrivacyAnalysis {
    pub fn new(view: &EavesdropperView) -> Self {
        let sys = LinearSystem::build(view);
        let dim = view
            .reconstructed
            .values()
            .chain(view.shares.values())
            .map(Vec::len)
            .next()
            .unwrap_or(1);
        let rref = Rref::new(sys.rows.iter().map(|(r, _)| r.clone()).collect(), sys.n_vars);
        // Solve per state component; the matrix is the same for every component.
        let solutions = (0..dim)
            .map(|c| {
                let rhs: Vec<f64> = sys.rows.iter().map(|(_, values)| values[c]).collect();
                rref.particular(&rhs)
            })
            .collect();
        Self {
            null: rref.null_space(),
            sys,
            solutions,
            edges: view.edges.clone(),
        }
    }

    pub fn verdict(&self, target: usize, with_witness: bool) -> PrivacyVerdict {
        let mut t = vec![0.0; self.sys.n_vars];
        t[self.sys.kept(target)] = 1.0;
        for &(a, b) in &self.edges {
            if a == target {
                t[self.sys.share(a, b)] = 1.0;
            }
        }
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let estimate = || self.solutions.iter().map(|z| dot(&t, z)).collect::<Vec<f64>>();
        match self.null.iter().find(|n| dot(&t, n).abs() > RANK_TOL) {
            None => PrivacyVerdict::Determined { estimate: estimate() },
            Some(n) => PrivacyVerdict::Underdetermined {
                witness: with_witness.then(|| {
                    let a = estimate();
                    let shift = dot(&t, n);
                    let b = a.iter().map(|v| v + shift).collect();
                    [a, b]
                }),
            },
        }
    }
}

struct LinearSystem {
    n_vars: usize,
    n_nodes: usize,
    share_idx: BTreeMap<(usize, usize), usize>,
    rows: Vec<(Vec<f64>, Vec<f64>)>,
}

impl LinearSystem {
    fn kept(&self, a: usize) -> usize {
        a
    }

    fn share(&self, a: usize, b: usize) -> usize {
        self.share_idx[&(a, b)]
    }

    fn build(view: &EavesdropperView) -> Self {
        let n = view.n_nodes;
        let mut share_idx = BTreeMap::new();
        let mut product_idx = BTreeMap::new();
        let mut next = n;
        for &e in &view.edges {
            share_idx.insert(e, next);
            next += 1;
        }
        for &e in &view.edges {
            if !view.weights.contains_key(&e) {
                product_idx.insert(e, next);
                next += 1;
            }
        }
        let mut sys = Self {
            n_vars: next,
            n_nodes: n,
            share_idx,
            rows: Vec::new(),
        };
        let unit = |k: usize, n_vars: usize| {
            let mut r = vec![0.0; n_vars];
            r[k] = 1.0;
            r
        };
        for (&e, v) in &view.shares {
            if let Some(&k) = sys.share_idx.get(&e) {
                sys.rows.push((unit(k, sys.n_vars), v.clone()));
            }
        }
        for (&a, v) in &view.own_shares {
            sys.rows.push((unit(a, sys.n_vars), v.clone()));
        }
        for (&a, v) in &view.reconstructed {
            if a >= sys.n_nodes {
                continue;
            }
            let mut r = vec![0.0; sys.n_vars];
            r[a] = 1.0;
            for &(j, b) in &view.edges {
                let weighted = |r: &mut Vec<f64>, sign: f64| match view.weights.get(&(j, b)) {
                    Some(w) => r[sys.share_idx[&(j, b)]] += sign * w,
                    None => r[product_idx[&(j, b)]] += sign,
                };
                if b == a {
                    weighted(&mut r, 1.0);
                }
                if j == a {
                    r[sys.share_idx[&(j, b)]] += 1.0;
                    weighted(&mut r, -1.0);
                }
            }
            sys.rows.push((r, v.clone()));
        }
        sys
    }
}

/// Reduced row echelon form of a dense matrix.
struct Rref {
    rows: Vec<Vec<f64>>,
    ops: Vec<RowOp>,
    pivots: Vec<usize>,
    n_cols: usize,
    n_rows: usize,
}

#[derive(Clone, Copy)]
enum RowOp {
    Swap(usize, usize),
    Scale(usize, f64),
    AddMul { target: usize, source: usize, factor: f64 },
}

impl Rref {
    fn new(mut rows: Vec<Vec<f64>>, n_cols: usize) -> Self {
        let n_rows = rows.len();
        let mut ops = Vec::new();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..n_cols {
            if r == n_rows {
                break;
            }
            let (best, size) =
                (r..n_rows)
                    .map(|k| (k, rows[k][c].abs()))
                    .fold((r, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if size <= RANK_TOL {
                continue;
            }
            rows.swap(r, best);
            ops.push(RowOp::Swap(r, best));
            let p = rows[r][c];
            rows[r].iter_mut().for_each(|v| *v /= p);
            ops.push(RowOp::Scale(r, 1.0 / p));
            for k in 0..n_rows {
                if k != r && rows[k][c] != 0.0 {
                    let factor = -rows[k][c];
                    let (src, dst) = if k < r {
                        let (lo, hi) = rows.split_at_mut(r);
                        (&hi[0], &mut lo[k])
                    } else {
                        let (lo, hi) = rows.split_at_mut(k);
                        (&lo[r], &mut hi[0])
                    };
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += factor * s;
                    }
                    ops.push(RowOp::AddMul {
                        target: k,
                        source: r,
                        factor,
                    });
                }
            }
            pivots.push(c);
            r += 1;
        }
        Self {
            rows,
            ops,
            pivots,
            n_cols,
            n_rows,
        }
    }

    fn null_space(&self) -> Vec<Vec<f64>> {
        let is_pivot: BTreeSet<usize> = self.pivots.iter().copied().collect();
        (0..self.n_cols)
            .filter(|c| !is_pivot.contains(c))
            .map(|free| {
                let mut v = vec![0.0; self.n_cols];
                v[free] = 1.0;
                for (r, &p) in self.pivots.iter().enumerate() {
                    v[p] = -self.rows[r][free];
                }
                v
            })
            .collect()
    }

    /// A least-effort particular solution: replay the row operations on the
    /// right-hand side and set free variables to zero.
    fn particular(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = rhs.to_vec();
        b.resize(self.n_rows, 0.0);
        for op in &self.ops {
            match *op {
                RowOp::Swap(i, j) => b.swap(i, j),
                RowOp::Scale(i, k) => b[i] *= k,
                RowOp::AddMul { target, source, factor } => b[target] += factor * b[source],
            }
        }
        let mut z = vec![0.0; self.n_cols];
        for (r, &p) in self.pivots.iter().enumerate() {
            z[p] = b[r];
        }
        z
    }
}

/// Largest gap between two vectors; re-exported for the verification suites.
pub fn state_gap(a: &[f64], b: &[f64]) -> f64 {
    max_abs_diff(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view_for(graph: &DirectedGraph, kind: EavesdropperKind) -> EavesdropperView {
        EavesdropperView {
            kind,
            edges: graph.edges(),
            n_nodes: graph.n_nodes(),
            shares: BTreeMap::new(),
            own_shares: BTreeMap::new(),
            weights: BTreeMap::new(),
            ciphertexts: BTreeSet::new(),
            reconstructed: BTreeMap::new(),
        }
    }

    // A tiny hand-built run: x0 values and weights chosen so the arithmetic
    // is easy to follow.
    fn two_node_run(view_weights: bool) -> (DirectedGraph, EavesdropperView, f64) {
        let g = DirectedGraph::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        let (s0, s1, e01, e10, w01, w10) = (1.0, 2.0, 0.5, -1.5, 0.25, 0.75);
        let x0_0 = s0 + e01;
        let x1_0 = s0 + w10 * e10 + (1.0 - w01) * e01;
        let x1_1 = s1 + w01 * e01 + (1.0 - w10) * e10;
        let mut v = view_for(&g, EavesdropperKind::External);
        v.shares.insert((0, 1), vec![e01]);
        v.shares.insert((1, 0), vec![e10]);
        v.reconstructed.insert(0, vec![x1_0]);
        v.reconstructed.insert(1, vec![x1_1]);
        if view_weights {
            v.weights.insert((0, 1), w01);
            v.weights.insert((1, 0), w10);
        }
        (g, v, x0_0)
    }

    #[test]
    fn external_view_needs_the_weights() {
        let (_, hidden, _) = two_node_run(false);
        let verdict = eavesdrop_reconstruct(&hidden, 0, true);
        let PrivacyVerdict::Underdetermined { witness: Some([a, b]) } = verdict else {
            panic!("expected a witness, got {verdict:?}");
        };
        assert!((a[0] - b[0]).abs() > 1e-6);
        let (_, open, x0) = two_node_run(true);
        match eavesdrop_reconstruct(&open, 0, false) {
            PrivacyVerdict::Determined { estimate } => assert!((estimate[0] - x0).abs() < 1e-12),
            other => panic!("expected determined, got {other:?}"),
        }
    }

    #[test]
    fn insider_sole_neighbor_determines_target() {
        // Node 0 talks only to the eavesdropper, node 1.
        let g = DirectedGraph::from_edges(3, &[(0, 1), (1, 0), (1, 2), (2, 1)]).unwrap();
        let (s0, e01, e10, w01, w10) = (0.3, 0.9, -0.4, 0.6, 0.2);
        let records = LocalRecords {
            sent: BTreeMap::from([(0, (vec![e10], w10)), (2, (vec![0.7], 0.5))]),
            received: BTreeMap::from([(0, (vec![e01], w01)), (2, (vec![0.1], 0.4))]),
        };
        let mut storage = StorageVector::new(3);
        storage.fill(0, Arc::new(vec![s0 + w10 * e10 + (1.0 - w01) * e01]));
        let view = EavesdropperView::internal(1, &g, &[0.0], &records, &storage);
        match eavesdrop_reconstruct(&view, 0, false) {
            PrivacyVerdict::Determined { estimate } => assert!((estimate[0] - (s0 + e01)).abs() < 1e-12),
            other => panic!("expected determined, got {other:?}"),
        }
        // Node 2 also has node 1 as its only neighbor, but its slot is unknown here.
        assert!(!eavesdrop_reconstruct(&view, 2, false).is_determined());
    }

    #[test]
    fn script_payloads() {
        let mut s = StorageVector::new(3);
        s.fill(0, Arc::new(vec![1.0, 2.0]));
        s.fill(2, Arc::new(vec![4.0, 0.0]));
        let mut noise = DeceptionScript::new(ScriptKind::UniformNoise, 0.1, 1);
        let a = noise.storage_payload(&s, 0);
        let b = noise.storage_payload(&s, 0);
        assert_eq!(a.get(0), s.get(0));
        assert_ne!(a.get(2), s.get(2));
        assert_ne!(a.get(2), b.get(2));
        assert!(a.get(1).is_none());
        let mut lie = DeceptionScript::new(ScriptKind::ConstantLie, 0.1, 1);
        assert_eq!(lie.storage_payload(&s, 0), lie.storage_payload(&s, 0));
        let mut replay = DeceptionScript::new(ScriptKind::Replay, 0.1, 1);
        assert_eq!(replay.storage_payload(&s, 0).get(2), s.get(0));
        assert_eq!(replay.tamper_state(&[1.0]), vec![1.0]);
    }

    #[test]
    fn dos_sends_nothing() {
        assert!(dos_behavior(5, &[]).is_empty());
    }

    #[test]
    fn identical_payload_check() {
        let p = Payload::SubState(Arc::new(vec![1.0]));
        let q = Payload::SubState(Arc::new(vec![2.0]));
        let msg = |to, payload| Message {
            round: 0,
            from: 0,
            to,
            payload,
        };
        assert!(identical_payloads(&[msg(1, p.clone()), msg(2, p.clone())]));
        assert!(!identical_payloads(&[msg(1, p), msg(2, q)]));
    }
}
