//! Scenario generators behind `cefac gen`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{
    EvidenceSpec, GraphModel, GraphSpec, ProtocolParams, RandomGraphSpec, ScenarioConfig, SCHEMA_VERSION,
};
use super::gaussian::{GaussianGroup, GaussianSpec, DEFAULT_DISCOUNT};
use super::SimError;
use crate::adversary::EavesdropperKind;
use crate::digraph::random_strongly_connected;
use crate::evidence::{FrameOfDiscernment, MassFunction};

/// The 20-node reconnaissance scenario: DoS attackers 6 and 18, deceivers 3
/// and 19, abnormal evidence at nodes 17 to 20.
pub const RECON20_JSON: &str = include_str!("../../../../scenarios/recon20.json");

pub fn recon20() -> ScenarioConfig {
    ScenarioConfig::from_json(RECON20_JSON).expect("bundled scenario parses")
}

/// Five Gaussian classes with means −2..2 and σ = 1; 15 nodes observe the
/// first class and 5 the last, over a random connected undirected graph.
pub fn gaussian5(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        schema: SCHEMA_VERSION,
        name: Some("gaussian5".into()),
        seed,
        frame: (1..=5).map(|k| format!("A{k}")).collect(),
        graph: GraphSpec::Random {
            random: RandomGraphSpec {
                model: GraphModel::Undirected,
                n: 20,
                density: 0.4,
                seed: None,
            },
        },
        evidence: EvidenceSpec::Gaussian(GaussianSpec {
            means: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            sigma: 1.0,
            n_samples: 1,
            discount: DEFAULT_DISCOUNT,
            groups: vec![
                GaussianGroup {
                    count: 15,
                    true_mean: -2.0,
                },
                GaussianGroup {
                    count: 5,
                    true_mean: 2.0,
                },
            ],
            seed: None,
        }),
        attackers: Vec::new(),
        eavesdroppers: Vec::new(),
        params: ProtocolParams::default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomScenarioParams {
    pub n_nodes: usize,
    pub n_events: usize,
    pub density: f64,
    pub seed: u64,
}

impl Default for RandomScenarioParams {
    fn default() -> Self {
        Self {
            n_nodes: 8,
            n_events: 3,
            density: 0.3,
            seed: 1,
        }
    }
}

/// Honest random strongly connected digraph with random evidence. Edges and
/// masses are written out explicitly so the file stands alone.
pub fn random_scenario(p: RandomScenarioParams) -> Result<ScenarioConfig, SimError> {
    if p.n_nodes == 0 || !(2..=crate::evidence::MAX_EVENTS).contains(&p.n_events) || !(0.0..=1.0).contains(&p.density) {
        return Err(SimError::BadParams(format!(
            "random scenarios need n >= 1, 2 <= events <= {}, density in [0, 1]",
            crate::evidence::MAX_EVENTS
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let graph = random_strongly_connected(p.n_nodes, p.density, &mut rng);
    let frame = Arc::new(FrameOfDiscernment::numbered(p.n_events)?);
    let evidence = (0..p.n_nodes)
        .map(|_| {
            let m = random_mass_function(frame.clone(), &mut rng);
            m.focal_elements()
                .map(|(mask, v)| (frame.subset_name(mask), v))
                .collect::<BTreeMap<String, f64>>()
        })
        .collect();
    Ok(ScenarioConfig {
        schema: SCHEMA_VERSION,
        name: Some(format!("random-n{}-s{}", p.n_nodes, p.seed)),
        seed: p.seed,
        frame: frame.labels().to_vec(),
        graph: GraphSpec::Explicit(graph),
        evidence: EvidenceSpec::Explicit(evidence),
        attackers: Vec::new(),
        eavesdroppers: vec![EavesdropperKind::External],
        params: ProtocolParams::default(),
    })
}

/// A mass function with one to four random focal sets. The last focal set
/// absorbs the rounding remainder so the masses sum to one exactly enough
/// for validation.
pub fn random_mass_function<R: Rng + ?Sized>(frame: Arc<FrameOfDiscernment>, rng: &mut R) -> MassFunction<f64> {
    let full = frame.full_mask();
    let k = rng.random_range(1..=4usize);
    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut masses = vec![0.0; frame.subset_count()];
    for w in weights {
        masses[rng.random_range(1..=full)] += w / total;
    }
    MassFunction::new(frame, masses)
        .and_then(|m| m.normalize())
        .expect("positive weights normalize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    use crate::sim::NodeRole;

    fn max_gap(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn recon20_validates() {
        let sc = recon20().validate().unwrap();
        assert_eq!(sc.normal_nodes().len(), 16);
    }

    #[test]
    fn recon20_normal_nodes_reach_the_oracle() {
        let sc = recon20().validate().unwrap();
        let r = crate::sim::run_validated(&sc).unwrap();
        assert!(r.converged);
        let mean = &r.oracle.mean_state;
        for n in r.normal_reports() {
            assert!(max_gap(&n.final_state, mean) < 1e-6, "node {} off the mean", n.node);
            assert!(n.oracle_gap.unwrap() < 1e-6);
            let i = n.node.index();
            let near = |a: usize| sc.graph.has_edge(a, i).unwrap() || sc.graph.has_edge(i, a).unwrap();
            let dos: BTreeSet<usize> = [5, 17].into_iter().filter(|&a| near(a)).collect();
            let deceivers: BTreeSet<usize> = [2, 18].into_iter().filter(|&a| near(a)).collect();
            assert_eq!(n.identified.dos, dos, "node {}", n.node);
            assert_eq!(n.identified.deceivers, deceivers, "node {}", n.node);
        }
        let normal = &r.normal_reports().next().unwrap().final_state;
        let (d1, d2) = (&r.node(2).final_state, &r.node(18).final_state);
        assert!(max_gap(d1, d2) < 1e-6);
        assert!(max_gap(d1, normal) > 1e-3);
        for k in [5, 17] {
            assert_eq!(r.node(k).role, NodeRole::Dos);
            assert!(max_gap(&r.node(k).final_state, normal) > 1e-3);
        }
    }
}
