use std::collections::BTreeSet;
use std::sync::Arc;

use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use super::config::{Scenario, ScenarioConfig, KEY_STREAM, NODE_STREAM_BASE, SCRIPT_STREAM};
use super::SimError;
use crate::adversary::{
    identical_payloads, DeceptionScript, EavesdropperKind, EavesdropperView, PrivacyAnalysis, PrivacyVerdict,
    DEFAULT_AMPLITUDE,
};
use crate::digraph::NodeId;
use crate::evidence::FrameOfDiscernment;
use crate::fusion::{
    assemble_wavccme, build_initial_state, centralized_wavccme, iterative_fusion_capped, FusionResult, WavccmeMatrix,
};
use crate::paillier::{GeneratorChoice, PaillierKeypair};
use crate::protocol::{
    flatten_state, split_state, AttackKind, Detection, Message, Phase, ProtocolConfig, ProtocolNode, Role,
};

/// Every node's state at the end of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSnapshot {
    pub round: usize,
    pub states: Vec<Vec<f64>>,
    pub phases: Vec<Phase>,
}

impl Serialize for RoundSnapshot {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct NodeEntry<'a> {
            node: NodeId,
            phase: Phase,
            state: &'a [f64],
        }
        let nodes: Vec<NodeEntry> = self
            .states
            .iter()
            .zip(&self.phases)
            .enumerate()
            .map(|(k, (state, &phase))| NodeEntry {
                node: NodeId(k),
                phase,
                state,
            })
            .collect();
        let mut s = serializer.serialize_struct("RoundSnapshot", 2)?;
        s.serialize_field("round", &self.round)?;
        s.serialize_field("nodes", &nodes)?;
        s.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Normal,
    Dos,
    Deception,
}

/// Attackers a node identified among its neighbors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdentifiedSets {
    pub dos: BTreeSet<usize>,
    pub deceivers: BTreeSet<usize>,
}

impl Serialize for IdentifiedSets {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let ids = |set: &BTreeSet<usize>| set.iter().map(|&k| NodeId(k)).collect::<Vec<_>>();
        let mut s = serializer.serialize_struct("IdentifiedSets", 2)?;
        s.serialize_field("dos", &ids(&self.dos))?;
        s.serialize_field("deceivers", &ids(&self.deceivers))?;
        s.end()
    }
}

impl From<Detection> for IdentifiedSets {
    fn from(d: Detection) -> Self {
        Self {
            dos: d.dos,
            deceivers: d.deceivers,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeReport {
    pub node: NodeId,
    pub role: NodeRole,
    pub converged_round: Option<usize>,
    /// Factor turning the final state into the network sums the node fuses.
    pub output_scale: usize,
    pub initial_state: Vec<f64>,
    pub reconstructed_state: Option<Vec<f64>>,
    pub final_state: Vec<f64>,
    pub identified: IdentifiedSets,
    /// `m_avg|A` assembled from the node's own final state.
    pub wavccme: Option<WavccmeMatrix<f64>>,
    pub fusion: Option<FusionResult<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fusion_error: Option<String>,
    /// Largest pignistic gap to the centralized reference over the normal nodes.
    pub oracle_gap: Option<f64>,
}

/// Centralized benchmark over the normal nodes.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub normal_nodes: Vec<NodeId>,
    /// `(1/|V_n|) Σ_{k ∈ V_n} x_k(0)`.
    pub mean_state: Vec<f64>,
    pub wavccme: WavccmeMatrix<f64>,
    pub fusion: FusionResult<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetVerdict {
    pub target: NodeId,
    /// Whether the target sends to somebody other than the eavesdropper.
    pub other_out_neighbor: bool,
    #[serde(flatten)]
    pub verdict: PrivacyVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrivacyReport {
    pub eavesdropper: EavesdropperKind,
    pub targets: Vec<TargetVerdict>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationResult {
    pub name: Option<String>,
    pub seed: u64,
    pub frame: Arc<FrameOfDiscernment>,
    pub converged: bool,
    /// Round in which the last normal node converged.
    pub converged_round: Option<usize>,
    pub rounds: usize,
    pub nodes: Vec<NodeReport>,
    pub oracle: OracleReport,
    pub privacy: Vec<PrivacyReport>,
    #[serde(skip)]
    pub snapshots: Vec<RoundSnapshot>,
    #[serde(skip)]
    pub initial_sum: Vec<f64>,
    #[serde(skip)]
    pub reconstructed_sum: Vec<f64>,
}

impl SimulationResult {
    pub fn node(&self, k: usize) -> &NodeReport {
        &self.nodes[k]
    }

    pub fn normal_reports(&self) -> impl Iterator<Item = &NodeReport> {
        self.nodes.iter().filter(|r| r.role == NodeRole::Normal)
    }
}

/// Validates `cfg` and runs it. See [`run_validated`].
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimulationResult, SimError> {
    let scenario = cfg.validate()?;
    run_validated(&scenario)
}

/// Synchronous rounds until every normal node has converged or the round
/// budget runs out; then each node fuses locally. A run that hits the
/// budget still returns its result, with `converged = false`.
pub fn run_validated(sc: &Scenario) -> Result<SimulationResult, SimError> {
    let params = &sc.config.params;
    let n = sc.n_nodes();
    let n_events = sc.frame.len();
    let initial: Vec<Vec<f64>> = sc
        .evidence
        .iter()
        .map(|m| build_initial_state(m, params.tau).map(|s| flatten_state(&s)))
        .collect::<Result<_, _>>()?;
    let mut nodes = build_nodes(sc, &initial)?;
    let normal = sc.normal_nodes();

    let mut inboxes: Vec<Vec<Message>> = vec![Vec::new(); n];
    let mut log: Vec<Message> = Vec::new();
    let mut snapshots = Vec::new();
    let mut rounds = 0;
    let mut converged_round = None;
    for round in 0..params.max_rounds {
        let mut next: Vec<Vec<Message>> = vec![Vec::new(); n];
        for (k, node) in nodes.iter_mut().enumerate() {
            let inbox = std::mem::take(&mut inboxes[k]);
            let outbox = node.step(round, &inbox);
            if sc.attack_kind(k) == Some(AttackKind::Deception) && !identical_payloads(&outbox) {
                return Err(SimError::AssumptionViolated(format!(
                    "deceiver {} sent differing payloads in round {round}",
                    k + 1
                )));
            }
            for m in outbox {
                if m.from != k || !sc.graph.has_edge(k, m.to).unwrap_or(false) {
                    return Err(SimError::AssumptionViolated(format!(
                        "node {} sent along a missing edge",
                        k + 1
                    )));
                }
                if round <= 1 {
                    log.push(m.clone());
                }
                next[m.to].push(m);
            }
        }
        // Canonical delivery order.
        for inbox in &mut next {
            inbox.sort_by_key(|m| (m.from, m.kind()));
        }
        inboxes = next;
        snapshots.push(RoundSnapshot {
            round,
            states: nodes.iter().map(|s| s.x().to_vec()).collect(),
            phases: nodes.iter().map(ProtocolNode::phase).collect(),
        });
        rounds = round + 1;
        if normal.iter().all(|&k| nodes[k].phase() == Phase::Converged) {
            converged_round = normal.iter().filter_map(|&k| nodes[k].converged_round()).max();
            break;
        }
    }
    let converged = converged_round.is_some();
    if converged {
        info!("all {} normal nodes converged by round {}", normal.len(), rounds - 1);
    } else {
        warn!(
            "round budget of {} exhausted before every normal node converged",
            params.max_rounds
        );
    }

    let oracle = oracle_report(sc, &initial)?;
    let reports = nodes
        .iter()
        .enumerate()
        .map(|(k, node)| node_report(sc, k, node, &initial[k], &oracle, n_events))
        .collect();
    let privacy = privacy_reports(sc, &nodes, &log);
    let dim = initial[0].len();
    let mut initial_sum = vec![0.0; dim];
    let mut reconstructed_sum = vec![0.0; dim];
    for (k, node) in nodes.iter().enumerate() {
        for c in 0..dim {
            initial_sum[c] += initial[k][c];
            reconstructed_sum[c] += node.x1().map_or(0.0, |x| x[c]);
        }
    }
    Ok(SimulationResult {
        name: sc.config.name.clone(),
        seed: sc.config.seed,
        frame: sc.frame.clone(),
        converged,
        converged_round,
        rounds,
        nodes: reports,
        oracle,
        privacy,
        snapshots,
        initial_sum,
        reconstructed_sum,
    })
}

fn build_nodes(sc: &Scenario, initial: &[Vec<f64>]) -> Result<Vec<ProtocolNode>, SimError> {
    let params = &sc.config.params;
    let n = sc.n_nodes();
    let mut key_rng = ChaCha8Rng::seed_from_u64(sc.config.seed);
    key_rng.set_stream(KEY_STREAM);
    let keypairs: Vec<PaillierKeypair> = (0..n)
        .map(|_| PaillierKeypair::generate(params.key_bits, GeneratorChoice::Standard, &mut key_rng))
        .collect::<Result<_, _>>()?;
    let keys = Arc::new(keypairs.iter().map(|k| k.public.clone()).collect::<Vec<_>>());
    let cfg = Arc::new(ProtocolConfig {
        n_nodes: n,
        n_events: sc.frame.len(),
        f: params.f,
        threshold: params.threshold,
        stability_rounds: sc.stability_rounds,
        stability_tol: params.stability_tol,
        encrypt_weights: params.encrypt_weights,
    });
    let nodes = keypairs
        .into_iter()
        .enumerate()
        .map(|(k, keypair)| {
            let role = match sc.attackers.get(&k) {
                None => Role::Honest,
                Some(a) if a.kind == AttackKind::Dos => Role::Dos,
                Some(a) => {
                    let seed = a.seed.unwrap_or_else(|| derived_seed(sc.config.seed, SCRIPT_STREAM, k));
                    Role::Deceiver(Box::new(DeceptionScript::new(
                        a.script.unwrap_or_default(),
                        a.amplitude.unwrap_or(DEFAULT_AMPLITUDE),
                        seed,
                    )))
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(sc.config.seed);
            rng.set_stream(NODE_STREAM_BASE + k as u64);
            ProtocolNode::new(
                k,
                role,
                sc.graph.in_neighbors(k).expect("node in range").to_vec(),
                sc.graph.out_neighbors(k).expect("node in range").to_vec(),
                initial[k].clone(),
                sc.epsilon[k],
                keypair,
                keys.clone(),
                cfg.clone(),
                rng,
            )
        })
        .collect();
    Ok(nodes)
}

fn derived_seed(seed: u64, stream: u64, k: usize) -> u64 {
    use rand::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(2 * k as u128);
    rng.next_u64()
}

fn oracle_report(sc: &Scenario, initial: &[Vec<f64>]) -> Result<OracleReport, SimError> {
    let params = &sc.config.params;
    let normal = sc.normal_nodes();
    let evidence: Vec<_> = normal.iter().map(|&k| sc.evidence[k].clone()).collect();
    let wavccme = centralized_wavccme(&evidence, params.tau)?;
    let fusion = iterative_fusion_capped(&wavccme, evidence.len(), params.delta, params.max_fusion_iterations)?;
    let dim = initial[0].len();
    let mut mean_state = vec![0.0; dim];
    for &k in &normal {
        for (m, v) in mean_state.iter_mut().zip(&initial[k]) {
            *m += v;
        }
    }
    mean_state.iter_mut().for_each(|m| *m /= normal.len() as f64);
    Ok(OracleReport {
        normal_nodes: normal.into_iter().map(NodeId).collect(),
        mean_state,
        wavccme,
        fusion,
    })
}

fn node_report(
    sc: &Scenario,
    k: usize,
    node: &ProtocolNode,
    x0: &[f64],
    oracle: &OracleReport,
    n_events: usize,
) -> NodeReport {
    let params = &sc.config.params;
    let role = match sc.attack_kind(k) {
        None => NodeRole::Normal,
        Some(AttackKind::Dos) => NodeRole::Dos,
        Some(AttackKind::Deception) => NodeRole::Deception,
    };
    let scale = node.output_scale();
    let scaled: Vec<f64> = node.x().iter().map(|v| v * scale as f64).collect();
    let (x_sum, y_sum) = split_state(&scaled, n_events);
    let fused = assemble_wavccme(sc.frame.clone(), &x_sum, &y_sum).and_then(|w| {
        let f = iterative_fusion_capped(&w, scale, params.delta, params.max_fusion_iterations)?;
        Ok((w, f))
    });
    let (wavccme, fusion, fusion_error) = match fused {
        Ok((w, f)) => (Some(w), Some(f), None),
        Err(e) => {
            if role == NodeRole::Normal {
                warn!("node {}: local fusion failed: {e}", k + 1);
            } else {
                debug!("attacker {}: local fusion failed: {e}", k + 1);
            }
            (None, None, Some(e.to_string()))
        }
    };
    let oracle_gap = fusion.as_ref().map(|f| {
        f.event_probs
            .iter()
            .zip(&oracle.fusion.event_probs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    });
    NodeReport {
        node: NodeId(k),
        role,
        converged_round: node.converged_round(),
        output_scale: scale,
        initial_state: x0.to_vec(),
        reconstructed_state: node.x1().map(<[f64]>::to_vec),
        final_state: node.x().to_vec(),
        identified: node.identified().into(),
        wavccme,
        fusion,
        fusion_error,
        oracle_gap,
    }
}

fn privacy_reports(sc: &Scenario, nodes: &[ProtocolNode], log: &[Message]) -> Vec<PrivacyReport> {
    let n = sc.n_nodes();
    sc.config
        .eavesdroppers
        .iter()
        .map(|&kind| {
            let (view, observer) = match kind {
                EavesdropperKind::Internal { node } => {
                    let h = node.index();
                    let hn = &nodes[h];
                    let empty = Default::default();
                    let view = EavesdropperView::internal(
                        h,
                        &sc.graph,
                        hn.own_share(),
                        hn.records().unwrap_or(&empty),
                        hn.storage(),
                    );
                    (view, Some(h))
                }
                EavesdropperKind::External => (EavesdropperView::external(&sc.graph, log), None),
            };
            let analysis = PrivacyAnalysis::new(&view);
            let targets = (0..n)
                .filter(|&i| Some(i) != observer)
                .map(|i| TargetVerdict {
                    target: NodeId(i),
                    other_out_neighbor: sc
                        .graph
                        .out_neighbors(i)
                        .expect("node in range")
                        .iter()
                        .any(|&j| Some(j) != observer),
                    verdict: analysis.verdict(i, true),
                })
                .collect();
            PrivacyReport {
                eavesdropper: kind,
                targets,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{random_scenario, RandomScenarioParams};

    #[test]
    fn honest_random_run_matches_the_oracle() {
        for seed in 0..3 {
            let cfg = random_scenario(RandomScenarioParams {
                n_nodes: 6,
                n_events: 3,
                density: 0.3,
                seed,
            })
            .unwrap();
            let r = run_scenario(&cfg).unwrap();
            assert!(r.converged, "seed {seed}");
            for node in r.normal_reports() {
                assert!(node.oracle_gap.unwrap() < 1e-6, "seed {seed} node {}", node.node);
                assert!(crate::adversary::state_gap(&node.final_state, &r.oracle.mean_state) < 1e-6);
            }
        }
    }
}
