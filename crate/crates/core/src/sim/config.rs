use std::collections::BTreeMap;
use std::sync::Arc;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gaussian::{generate_gaussian_evidence, GaussianSpec};
use super::SimError;
use crate::adversary::{AttackerSpec, EavesdropperKind};
use crate::digraph::{
    random_connected_undirected, random_digraph, random_strongly_connected, DirectedGraph, FLocalSemantics,
    MAX_ENUMERATION_NODES,
};
use crate::evidence::{FrameOfDiscernment, MassFunction};
use crate::paillier::MIN_TEST_BITS;
use crate::protocol::{AttackKind, ThresholdRule};

pub const SCHEMA_VERSION: u32 = 1;

/// Full description of one simulation run, as stored in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seed: u64,
    pub frame: Vec<String>,
    pub graph: GraphSpec,
    pub evidence: EvidenceSpec,
    #[serde(default)]
    pub attackers: Vec<AttackerSpec>,
    #[serde(default)]
    pub eavesdroppers: Vec<EavesdropperKind>,
    #[serde(default)]
    pub params: ProtocolParams,
}

/// An explicit edge list or a seeded random generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Explicit(DirectedGraph),
    Random { random: RandomGraphSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphModel {
    /// Hamiltonian cycle plus random extra edges.
    StronglyConnected,
    /// Spanning tree plus random extra edges, all bidirectional.
    Undirected,
    /// Independent random edges, no connectivity guarantee.
    Digraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomGraphSpec {
    pub model: GraphModel,
    pub n: usize,
    pub density: f64,
    /// Defaults to the scenario seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RandomGraphSpec {
    pub fn build(&self, fallback_seed: u64) -> DirectedGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(fallback_seed));
        rng.set_stream(GRAPH_STREAM);
        match self.model {
            GraphModel::StronglyConnected => random_strongly_connected(self.n, self.density, &mut rng),
            GraphModel::Undirected => random_connected_undirected(self.n, self.density, &mut rng),
            GraphModel::Digraph => random_digraph(self.n, self.density, &mut rng),
        }
    }
}

/// Per-node evidence: one `{subset: mass}` map per node over the scenario
/// frame, or a Gaussian likelihood generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum EvidenceSpec {
    Explicit(Vec<BTreeMap<String, f64>>),
    Gaussian(GaussianSpec),
}

/// Control gain: one value for every node or one per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Epsilon {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::Uniform(0.3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolParams {
    /// Distance coefficient of the support `exp(−τ d)`.
    pub tau: f64,
    /// Termination threshold of the local iterative fusion.
    pub delta: f64,
    pub epsilon: Epsilon,
    /// Tolerated attacker fraction per in-neighborhood.
    pub f: f64,
    /// Robustness level the normal subgraph must reach; defaults to just above `2f`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub threshold: ThresholdRule,
    /// Rounds without change that count as stable; defaults to `2N`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability_rounds: Option<usize>,
    pub stability_tol: f64,
    pub key_bits: u64,
    pub max_rounds: usize,
    pub encrypt_weights: bool,
    pub f_local_semantics: FLocalSemantics,
    /// Run even when the attack bound or the robustness check fails.
    pub waive_robustness_check: bool,
    pub max_fusion_iterations: usize,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            tau: 2.0,
            delta: 1e-9,
            epsilon: Epsilon::default(),
            f: 0.0,
            p: None,
            threshold: ThresholdRule::default(),
            stability_rounds: None,
            stability_tol: 1e-12,
            key_bits: 64,
            max_rounds: 1000,
            encrypt_weights: true,
            f_local_semantics: FLocalSemantics::default(),
            waive_robustness_check: false,
            max_fusion_iterations: crate::fusion::DEFAULT_MAX_ITERATIONS,
        }
    }
}

pub(crate) const GRAPH_STREAM: u64 = 1;
pub(crate) const EVIDENCE_STREAM: u64 = 2;
pub(crate) const KEY_STREAM: u64 = 3;
pub(crate) const SCRIPT_STREAM: u64 = 4;
pub(crate) const NODE_STREAM_BASE: u64 = 1 << 32;

/// A configuration that passed validation, with generators expanded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub graph: DirectedGraph,
    pub frame: Arc<FrameOfDiscernment>,
    pub evidence: Vec<MassFunction<f64>>,
    pub attackers: BTreeMap<usize, AttackerSpec>,
    pub epsilon: Vec<f64>,
    pub stability_rounds: usize,
    pub p: f64,
}

impl Scenario {
    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn normal_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|k| !self.attackers.contains_key(k))
            .collect()
    }

    pub fn attack_kind(&self, k: usize) -> Option<AttackKind> {
        self.attackers.get(&k).map(|a| a.kind)
    }
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::ConfigInvalid(msg.into())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario configs always serialize")
    }

    /// Checks every field and expands graph and evidence generators.
    pub fn validate(&self) -> Result<Scenario, SimError> {
        if self.schema != SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                self.schema
            )));
        }
        let frame = Arc::new(FrameOfDiscernment::new(self.frame.iter()).map_err(|e| invalid(format!("frame: {e}")))?);
        let graph = match &self.graph {
            GraphSpec::Explicit(g) => g.clone(),
            GraphSpec::Random { random } => {
                if !(0.0..=1.0).contains(&random.density) {
                    return Err(invalid(format!("graph density {} outside [0, 1]", random.density)));
                }
                random.build(self.seed)
            }
        };
        let n = graph.n_nodes();
        if n == 0 {
            return Err(invalid("graph has no nodes"));
        }
        let evidence = self.build_evidence(&frame, n)?;
        let p = &self.params;
        if !(p.tau > 0.0) {
            return Err(invalid(format!("tau must be positive, got {}", p.tau)));
        }
        if !(p.delta > 0.0) {
            return Err(invalid(format!("delta must be positive, got {}", p.delta)));
        }
        if !(0.0..1.0).contains(&p.f) {
            return Err(invalid(format!("f must lie in [0, 1), got {}", p.f)));
        }
        if p.key_bits < MIN_TEST_BITS {
            return Err(invalid(format!("key_bits must be at least {MIN_TEST_BITS}")));
        }
        if p.max_rounds < 2 || p.max_fusion_iterations == 0 {
            return Err(invalid(
                "max_rounds must be at least 2 and max_fusion_iterations positive",
            ));
        }
        if !(p.stability_tol >= 0.0) {
            return Err(invalid("stability_tol must be non-negative"));
        }
        let epsilon = match &p.epsilon {
            Epsilon::Uniform(e) => vec![*e; n],
            Epsilon::PerNode(v) if v.len() == n => v.clone(),
            Epsilon::PerNode(v) => return Err(invalid(format!("{} control gains for {n} nodes", v.len()))),
        };
        if let Some(e) = epsilon.iter().find(|e| !(0.0..1.0).contains(*e)) {
            return Err(invalid(format!("control gain {e} outside [0, 1)")));
        }
        let stability_rounds = p.stability_rounds.unwrap_or(2 * n);
        if stability_rounds == 0 {
            return Err(invalid("stability_rounds must be positive"));
        }
        let mut attackers = BTreeMap::new();
        for a in &self.attackers {
            let k = a.node.index();
            if k >= n {
                return Err(invalid(format!(
                    "attacker {} is not a node of the {n}-node graph",
                    a.node
                )));
            }
            if let Some(amp) = a.amplitude {
                if !(amp.is_finite() && amp >= 0.0) {
                    return Err(invalid(format!(
                        "attacker {}: amplitude must be finite and non-negative",
                        a.node
                    )));
                }
            }
            if attackers.insert(k, a.clone()).is_some() {
                return Err(invalid(format!("attacker {} listed twice", a.node)));
            }
        }
        if attackers.len() == n {
            return Err(invalid("every node is an attacker"));
        }
        for e in &self.eavesdroppers {
            if let EavesdropperKind::Internal { node } = e {
                if node.index() >= n {
                    return Err(invalid(format!("eavesdropper {node} is not a node")));
                }
                if attackers.contains_key(&node.index()) {
                    return Err(invalid(format!("node {node} cannot both eavesdrop and attack")));
                }
            }
        }
        let robust_p = match p.p {
            Some(v) if !(v > 2.0 * p.f && v <= 1.0) => {
                return Err(invalid(format!("p = {v} must satisfy 2f < p <= 1 with f = {}", p.f)));
            }
            Some(v) => v,
            None => (2.0 * p.f + 1e-6).min(1.0),
        };
        let scenario = Scenario {
            config: self.clone(),
            graph,
            frame,
            evidence,
            attackers,
            epsilon,
            stability_rounds,
            p: robust_p,
        };
        scenario.check_assumptions()?;
        Ok(scenario)
    }

    fn build_evidence(&self, frame: &Arc<FrameOfDiscernment>, n: usize) -> Result<Vec<MassFunction<f64>>, SimError> {
        match &self.evidence {
            EvidenceSpec::Explicit(list) => {
                if list.len() != n {
                    return Err(invalid(format!("{} evidence entries for {n} nodes", list.len())));
                }
                list.iter()
                    .enumerate()
                    .map(|(k, masses)| {
                        let focal: Vec<(&str, f64)> = masses.iter().map(|(s, v)| (s.as_str(), *v)).collect();
                        MassFunction::from_named(frame.clone(), &focal)
                            .map_err(|e| invalid(format!("evidence of node {}: {e}", k + 1)))
                    })
                    .collect()
            }
            EvidenceSpec::Gaussian(spec) => {
                spec.validate(frame.len()).map_err(invalid)?;
                let total: usize = spec.groups.iter().map(|g| g.count).sum();
                if total != n {
                    return Err(invalid(format!("gaussian groups cover {total} nodes, graph has {n}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.unwrap_or(self.seed));
                rng.set_stream(EVIDENCE_STREAM);
                let mut out = Vec::with_capacity(n);
                for g in &spec.groups {
                    for _ in 0..g.count {
                        out.push(generate_gaussian_evidence(frame.clone(), g.true_mean, spec, &mut rng));
                    }
                }
                Ok(out)
            }
        }
    }
}

impl Scenario {
    /// The f-fraction attack bound and the strong robustness of the normal
    /// subgraph. Failures are fatal unless waived.
    fn check_assumptions(&self) -> Result<(), SimError> {
        let params = &self.config.params;
        let attackers: Vec<usize> = self.attackers.keys().copied().collect();
        let mut problems = Vec::new();
        let local = self
            .graph
            .satisfies_f_fraction_local(&attackers, params.f, params.f_local_semantics)
            .map_err(|e| invalid(e.to_string()))?;
        if !local {
            problems.push(format!(
                "attackers {:?} exceed the f = {} local bound",
                one_based(&attackers),
                params.f
            ));
        }
        let normal = self.normal_nodes();
        if normal.len() > MAX_ENUMERATION_NODES {
            warn!(
                "normal subgraph has {} nodes; strong robustness is only checked up to {MAX_ENUMERATION_NODES}",
                normal.len()
            );
        } else {
            let sub = self.graph.induced(&normal).map_err(|e| invalid(e.to_string()))?;
            if !sub
                .is_strongly_p_fraction_robust(self.p)
                .map_err(|e| invalid(e.to_string()))?
            {
                problems.push(format!("normal subgraph is not strongly {}-fraction robust", self.p));
            }
        }
        if problems.is_empty() {
            return Ok(());
        }
        let msg = problems.join("; ");
        if params.waive_robustness_check {
            warn!("robustness check waived: {msg}");
            Ok(())
        } else {
            Err(invalid(msg))
        }
    }
}

pub(crate) fn one_based(ids: &[usize]) -> Vec<usize> {
    ids.iter().map(|k| k + 1).collect()
}
