//! High-conflict recognition trials with Gaussian evidence.
//!
//! A trial draws evidence from inlier and outlier nodes, keeps it only when
//! the credible centralized fusion picks the target class while plain
//! Dempster combination does not, and then runs the distributed pipeline on
//! the kept evidence: attack-free linear average consensus (Metropolis
//! weights on a random connected undirected graph) followed by local fusion.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gaussian::{generate_gaussian_evidence, GaussianGroup, GaussianSpec, DEFAULT_DISCOUNT};
use super::SimError;
use crate::digraph::{random_connected_undirected, DirectedGraph};
use crate::evidence::{FrameOfDiscernment, MassFunction};
use crate::fusion::{argmax, assemble_wavccme, build_initial_state, centralized_reference, iterative_fusion};
use crate::protocol::{flatten_state, split_state};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HighConflictConfig {
    pub means: Vec<f64>,
    pub sigma: f64,
    pub n_samples: usize,
    pub discount: f64,
    pub inliers: usize,
    pub inlier_mean: f64,
    pub outliers: usize,
    pub outlier_mean: f64,
    /// 0-based index of the true class.
    pub target: usize,
    pub tau: f64,
    pub delta: f64,
    pub density: f64,
    pub consensus_tol: f64,
    pub max_consensus_iterations: usize,
}

impl Default for HighConflictConfig {
    fn default() -> Self {
        Self {
            means: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            sigma: 1.0,
            n_samples: 1,
            discount: DEFAULT_DISCOUNT,
            inliers: 15,
            inlier_mean: -2.0,
            outliers: 5,
            outlier_mean: 2.0,
            target: 0,
            tau: 2.0,
            delta: 1e-9,
            density: 0.4,
            consensus_tol: 1e-13,
            max_consensus_iterations: 100_000,
        }
    }
}

impl HighConflictConfig {
    pub fn gaussian_spec(&self) -> GaussianSpec {
        GaussianSpec {
            means: self.means.clone(),
            sigma: self.sigma,
            n_samples: self.n_samples,
            discount: self.discount,
            groups: vec![
                GaussianGroup {
                    count: self.inliers,
                    true_mean: self.inlier_mean,
                },
                GaussianGroup {
                    count: self.outliers,
                    true_mean: self.outlier_mean,
                },
            ],
            seed: None,
        }
    }

    pub fn frame(&self) -> Result<Arc<FrameOfDiscernment>, SimError> {
        Ok(Arc::new(FrameOfDiscernment::numbered(self.means.len())?))
    }

    fn validate(&self) -> Result<(), SimError> {
        self.gaussian_spec()
            .validate(self.means.len())
            .map_err(SimError::ConfigInvalid)?;
        if self.target >= self.means.len() || self.inliers + self.outliers < 2 {
            return Err(SimError::ConfigInvalid(
                "target class out of range or fewer than two nodes".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub accepted: bool,
    /// Decision of the centralized credible fusion (0-based class).
    pub oracle_decision: usize,
    /// `None` when the evidence is totally conflicting under Dempster's rule.
    pub dempster_decision: Option<usize>,
    pub dempster_probs: Option<Vec<f64>>,
    /// Distributed pipeline outcome; only computed for accepted trials.
    pub cefac_decision: Option<usize>,
    pub cefac_probs: Option<Vec<f64>>,
    pub consensus_iterations: Option<usize>,
}

/// Plain Dempster combination of all the evidence.
pub fn dempster_fold(evidence: &[MassFunction<f64>]) -> Option<MassFunction<f64>> {
    let (first, rest) = evidence.split_first()?;
    rest.iter().try_fold(first.clone(), |acc, m| acc.combine(m).ok())
}

pub fn high_conflict_trial<R: Rng + ?Sized>(cfg: &HighConflictConfig, rng: &mut R) -> Result<TrialRecord, SimError> {
    cfg.validate()?;
    let frame = cfg.frame()?;
    let spec = cfg.gaussian_spec();
    let evidence: Vec<MassFunction<f64>> = spec
        .groups
        .iter()
        .flat_map(|g| std::iter::repeat_n(g.true_mean, g.count))
        .map(|mean| generate_gaussian_evidence(frame.clone(), mean, &spec, rng))
        .collect();
    let dempster_probs = dempster_fold(&evidence).map(|m| m.betp()).transpose()?;
    let dempster_decision = dempster_probs.as_deref().map(argmax);
    let oracle = centralized_reference(&evidence, cfg.tau, cfg.delta)?;
    let accepted = oracle.decision() == cfg.target && dempster_decision != Some(cfg.target);
    let mut record = TrialRecord {
        accepted,
        oracle_decision: oracle.decision(),
        dempster_decision,
        dempster_probs,
        cefac_decision: None,
        cefac_probs: None,
        consensus_iterations: None,
    };
    if accepted {
        let graph = random_connected_undirected(evidence.len(), cfg.density, rng);
        let initial: Vec<Vec<f64>> = evidence
            .iter()
            .map(|m| build_initial_state(m, cfg.tau).map(|s| flatten_state(&s)))
            .collect::<Result<_, _>>()?;
        let (states, iterations) = linear_consensus(&graph, initial, cfg.consensus_tol, cfg.max_consensus_iterations)?;
        let n = evidence.len();
        let scaled: Vec<f64> = states[0].iter().map(|v| v * n as f64).collect();
        let (x_sum, y_sum) = split_state(&scaled, frame.len());
        let w = assemble_wavccme(frame, &x_sum, &y_sum)?;
        let fused = iterative_fusion(&w, n, cfg.delta)?;
        record.cefac_decision = Some(fused.decision());
        record.cefac_probs = Some(fused.event_probs);
        record.consensus_iterations = Some(iterations);
    }
    Ok(record)
}

/// Metropolis-weighted average consensus on an undirected graph until every
/// node is within `tol` (relative) of every other.
pub fn linear_consensus(
    graph: &DirectedGraph,
    mut states: Vec<Vec<f64>>,
    tol: f64,
    max_iterations: usize,
) -> Result<(Vec<Vec<f64>>, usize), SimError> {
    let n = graph.n_nodes();
    let degree: Vec<usize> = (0..n).map(|i| graph.in_degree(i)).collect();
    for iteration in 0..=max_iterations {
        let spread = spread(&states);
        let scale = 1.0 + states.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if spread <= tol * scale {
            return Ok((states, iteration));
        }
        let next: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut x = states[i].clone();
                for &j in graph.in_neighbors(i).expect("node in range") {
                    let w = 1.0 / (1 + degree[i].max(degree[j])) as f64;
                    for (a, (xj, xi)) in x.iter_mut().zip(states[j].iter().zip(&states[i])) {
                        *a += w * (xj - xi);
                    }
                }
                x
            })
            .collect();
        states = next;
    }
    Err(SimError::ConsensusFailed(max_iterations))
}

fn spread(states: &[Vec<f64>]) -> f64 {
    let dim = states.first().map_or(0, Vec::len);
    (0..dim)
        .map(|c| {
            let (lo, hi) = states.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s[c]), hi.max(s[c]))
            });
            hi - lo
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HighConflictSummary {
    pub trials: usize,
    pub accepted: usize,
    pub cefac_correct: usize,
    pub dempster_wrong: usize,
    pub records: Vec<TrialRecord>,
}

/// Runs trials until `wanted` are accepted or `max_trials` have been drawn.
pub fn run_high_conflict(
    cfg: &HighConflictConfig,
    wanted: usize,
    max_trials: usize,
    seed: u64,
) -> Result<HighConflictSummary, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = HighConflictSummary {
        trials: 0,
        accepted: 0,
        cefac_correct: 0,
        dempster_wrong: 0,
        records: Vec::new(),
    };
    while summary.accepted < wanted && summary.trials < max_trials {
        let record = high_conflict_trial(cfg, &mut rng)?;
        summary.trials += 1;
        if record.accepted {
            summary.accepted += 1;
            summary.cefac_correct += usize::from(record.cefac_decision == Some(cfg.target));
            summary.dempster_wrong += usize::from(record.dempster_decision != Some(cfg.target));
            summary.records.push(record);
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unanimous_evidence_is_rejected() {
        let cfg = HighConflictConfig {
            outliers: 0,
            sigma: 0.05,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let r = high_conflict_trial(&cfg, &mut rng).unwrap();
            assert!(!r.accepted);
            assert_eq!(r.dempster_decision, Some(0));
        }
    }

    #[test]
    fn accepted_trials_have_dempster_off_target() {
        let s = run_high_conflict(&HighConflictConfig::default(), 3, 5000, 11).unwrap();
        assert_eq!(s.accepted, 3);
        for r in &s.records {
            assert_ne!(r.dempster_decision, Some(0));
            assert_eq!(r.oracle_decision, 0);
        }
    }

    #[test]
    fn consensus_reaches_the_average() {
        let g = DirectedGraph::ring(4);
        let mut undirected = g.clone();
        for (a, b) in g.edges() {
            let _ = undirected.add_edge(b, a);
        }
        let (states, _) = linear_consensus(
            &undirected,
            vec![vec![0.0], vec![4.0], vec![8.0], vec![0.0]],
            1e-13,
            10_000,
        )
        .unwrap();
        for s in states {
            assert!((s[0] - 3.0).abs() < 1e-11);
        }
    }
}
