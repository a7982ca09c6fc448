//! Property suites behind `cefac verify` and the acceptance test.
//!
//! Every check draws its inputs from a seeded generator, compares the
//! production path against an independent oracle and reports one
//! [`CheckReport`]. A check passes only when the property holds at its
//! tolerance and the run stays inside its time budget.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adversary::EavesdropperKind;
use crate::digraph::{random_digraph, NodeId};
use crate::evidence::{FrameOfDiscernment, MassFunction};
use crate::fusion::{build_initial_state, centralized_wavccme, wavccme_from_states};
use crate::paillier::{GeneratorChoice, PaillierKeypair, WEIGHT_SCALE};
use crate::reference::{dempster_by_sets, naive_p_robust, naive_strongly_p_robust};
use crate::sim::{
    random_mass_function, random_scenario, recon20, run_high_conflict, run_scenario, run_validated, HighConflictConfig,
    NodeRole, RandomScenarioParams, ScenarioConfig, SimulationResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Evidence,
    Consensus,
    Privacy,
    Robustness,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 5] = ["evidence", "consensus", "privacy", "robustness", "all"];
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "evidence" => Ok(Suite::Evidence),
            "consensus" => Ok(Suite::Consensus),
            "privacy" => Ok(Suite::Privacy),
            "robustness" => Ok(Suite::Robustness),
            "all" => Ok(Suite::All),
            other => Err(format!(
                "unknown suite {other:?}; expected one of {}",
                Suite::NAMES.join(", ")
            )),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Suite::Evidence => "evidence",
            Suite::Consensus => "consensus",
            Suite::Privacy => "privacy",
            Suite::Robustness => "robustness",
            Suite::All => "all",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    /// Number of generated cases the property was evaluated on.
    pub cases: usize,
    /// Worst observed error, where the property is numeric.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst: Option<f64>,
    pub tolerance: Option<f64>,
    pub elapsed_ms: u128,
    pub budget_ms: u128,
    /// First failure, or a short summary when everything held.
    pub detail: String,
}

impl CheckReport {
    /// One human-readable line, `PASS`/`FAIL` first.
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {:<28} cases={:<5} {}({} ms / {} ms) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.cases,
            self.worst.map(|w| format!("worst={w:.3e} ")).unwrap_or_default(),
            self.elapsed_ms,
            self.budget_ms,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<CheckReport>,
}

/// Runs one suite with its default seeds.
pub fn run_suite(suite: Suite) -> SuiteReport {
    let checks = match suite {
        Suite::Evidence => vec![
            dempster_oracle(1000, 1),
            wavccme_identity(200, 2),
            high_conflict(100, 9),
        ],
        Suite::Consensus => {
            let mut v = vec![sum_preservation(100, 3), honest_convergence(50, 4)];
            v.extend(recon20_under_attack());
            v
        }
        Suite::Privacy => vec![privacy(100, 7), paillier(500, 8)],
        Suite::Robustness => vec![robustness_predicates(200, 10)],
        Suite::All => {
            return SuiteReport::merge(
                Suite::All,
                [Suite::Evidence, Suite::Consensus, Suite::Privacy, Suite::Robustness].map(run_suite),
            )
        }
    };
    let mut checks = checks;
    checks.sort_by_key(|c| c.id);
    SuiteReport {
        suite,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

impl SuiteReport {
    fn merge<I: IntoIterator<Item = SuiteReport>>(suite: Suite, parts: I) -> Self {
        let mut checks: Vec<CheckReport> = parts.into_iter().flat_map(|r| r.checks).collect();
        checks.sort_by_key(|c| c.id);
        SuiteReport {
            suite,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

/// Tracks the worst error and the first failure across cases.
struct Tally {
    cases: usize,
    worst: f64,
    failure: Option<String>,
}

impl Tally {
    fn new() -> Self {
        Self {
            cases: 0,
            worst: 0.0,
            failure: None,
        }
    }

    fn error(&mut self, value: f64, tol: f64, what: impl FnOnce() -> String) {
        if value.is_nan() || value > self.worst {
            self.worst = value;
        }
        if !(value <= tol) {
            self.fail(what);
        }
    }

    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.fail(what);
        }
    }

    fn fail(&mut self, what: impl FnOnce() -> String) {
        if self.failure.is_none() {
            self.failure = Some(what());
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        self,
        id: u8,
        name: &'static str,
        tolerance: Option<f64>,
        started: Instant,
        budget: Duration,
        summary: String,
    ) -> CheckReport {
        let elapsed = started.elapsed();
        let in_time = elapsed <= budget;
        let detail = match (&self.failure, in_time) {
            (Some(f), _) => f.clone(),
            (None, false) => format!("over the time budget; {summary}"),
            (None, true) => summary,
        };
        CheckReport {
            id,
            name,
            passed: self.failure.is_none() && in_time,
            cases: self.cases,
            worst: tolerance.map(|_| self.worst),
            tolerance,
            elapsed_ms: elapsed.as_millis(),
            budget_ms: budget.as_millis(),
            detail,
        }
    }
}

fn random_frame<R: Rng + ?Sized>(rng: &mut R, max_events: usize) -> Arc<FrameOfDiscernment> {
    Arc::new(FrameOfDiscernment::numbered(rng.random_range(2..=max_events)).expect("small frame"))
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Dempster's rule against pairwise focal-set enumeration.
pub fn dempster_oracle(pairs: usize, seed: u64) -> CheckReport {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new();
    let tol = 1e-10;
    let mut conflicting = 0;
    while t.cases < pairs {
        let frame = random_frame(&mut rng, 4);
        let m1 = random_mass_function(frame.clone(), &mut rng);
        let m2 = random_mass_function(frame, &mut rng);
        t.cases += 1;
        let case = t.cases;
        match (m1.combine(&m2), dempster_by_sets(&m1, &m2)) {
            (Ok(fast), Some(slow)) => {
                let gap = max_gap(fast.masses(), &slow);
                t.error(gap, tol, || format!("pair {case} differs by {gap:.3e}"));
            }
            (Err(_), None) => conflicting += 1,
            (fast, slow) => t.fail(|| {
                format!(
                    "pair {case}: fast ok = {}, oracle ok = {}",
                    fast.is_ok(),
                    slow.is_some()
                )
            }),
        }
    }
    let summary = format!("{conflicting} totally conflicting pairs agreed on rejection");
    t.finish(
        1,
        "dempster-oracle",
        Some(tol),
        started,
        Duration::from_secs(5),
        summary,
    )
}

/// Summed initial states assemble to the centralized matrix.
pub fn wavccme_identity(sets: usize, seed: u64) -> CheckReport {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new();
    let tol = 1e-12;
    let tau = 2.0;
    while t.cases < sets {
        let frame = random_frame(&mut rng, 4);
        let n_nodes = rng.random_range(1..=10);
        let evidence: Vec<MassFunction<f64>> = (0..n_nodes)
            .map(|_| random_mass_function(frame.clone(), &mut rng))
            .collect();
        t.cases += 1;
        let case = t.cases;
        let states: Result<Vec<_>, _> = evidence.iter().map(|m| build_initial_state(m, tau)).collect();
        let assembled = states.and_then(|s| wavccme_from_states(frame.clone(), &s));
        match (assembled, centralized_wavccme(&evidence, tau)) {
            (Ok(a), Ok(c)) => {
                let gap = a.max_abs_diff(&c);
                t.error(gap, tol, || format!("set {case} differs by {gap:.3e}"));
            }
            (a, c) => t.fail(|| {
                format!(
                    "set {case}: assembled ok = {}, centralized ok = {}",
                    a.is_ok(),
                    c.is_ok()
                )
            }),
        }
    }
    t.finish(
        2,
        "wavccme-identity",
        Some(tol),
        started,
        Duration::from_secs(10),
        format!("{sets} evidence sets"),
    )
}

fn honest_config(n_nodes: usize, seed: u64, rng: &mut ChaCha8Rng) -> ScenarioConfig {
    random_scenario(RandomScenarioParams {
        n_nodes,
        n_events: rng.random_range(2..=4),
        density: rng.random_range(0.1..0.6),
        seed,
    })
    .expect("generator parameters are in range")
}

/// Reconstruction after the first round keeps the network sum.
pub fn sum_preservation(runs: usize, seed: u64) -> CheckReport {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new();
    let tol = 1e-9;
    for k in 0..runs {
        let n = rng.random_range(2..=20);
        let cfg = honest_config(n, seed * 1000 + k as u64, &mut rng);
        t.cases += 1;
        match run_scenario(&cfg) {
            Ok(r) => {
                let gap = max_gap(&r.initial_sum, &r.reconstructed_sum);
                t.error(gap, tol, || format!("run {k} (N = {n}) moved the sum by {gap:.3e}"));
            }
            Err(e) => t.fail(|| format!("run {k} (N = {n}) failed: {e}")),
        }
    }
    t.finish(
        3,
        "sum-preservation",
        Some(tol),
        started,
        Duration::from_secs(30),
        format!("{runs} honest runs, N <= 20"),
    )
}

/// Worst distance from the network mean and from the centralized fusion.
fn oracle_gaps(r: &SimulationResult) -> Result<(f64, f64), String> {
    let mut state_gap = 0.0f64;
    let mut fusion_gap = 0.0f64;
    for n in r.normal_reports() {
        state_gap = state_gap.max(max_gap(&n.final_state, &r.oracle.mean_state));
        match n.oracle_gap {
            Some(g) => fusion_gap = fusion_gap.max(g),
            None => {
                return Err(format!(
                    "node {} has no fusion result: {}",
                    n.node,
                    n.fusion_error.as_deref().unwrap_or("?")
                ))
            }
        }
    }
    Ok((state_gap, fusion_gap))
}

/// Honest strongly connected runs reach the mean and the centralized fusion.
pub fn honest_convergence(runs: usize, seed: u64) -> CheckReport {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new();
    let tol = 1e-6;
    for k in 0..runs {
        let n = rng.random_range(2..=12);
        let cfg = honest_config(n, seed * 1000 + k as u64, &mut rng);
        t.cases += 1;
        match run_scenario(&cfg).map_err(|e| e.to_string()).and_then(|r| {
            if r.converged {
                oracle_gaps(&r)
            } else {
                Err("did not converge".into())
            }
        }) {
            Ok((state, fusion)) => t.error(state.max(fusion), tol, || {
                format!("run {k} (N = {n}): state gap {state:.3e}, fusion gap {fusion:.3e}")
            }),
            Err(e) => t.fail(|| format!("run {k} (N = {n}): {e}")),
        }
    }
    t.finish(
        4,
        "honest-convergence",
        Some(tol),
        started,
        Duration::from_secs(120),
        format!("{runs} strongly connected runs"),
    )
}

/// The bundled 20-node attack scenario; yields the convergence check and the
/// identification check, which share one run.
pub fn recon20_under_attack() -> [CheckReport; 2] {
    let started = Instant::now();
    let budget = Duration::from_secs(60);
    let mut conv = Tally::new();
    let mut ident = Tally::new();
    conv.cases = 1;
    let run = recon20()
        .validate()
        .map_err(|e| e.to_string())
        .and_then(|sc| run_validated(&sc).map(|r| (sc, r)).map_err(|e| e.to_string()));
    let tol = 1e-6;
    match run {
        Ok((sc, r)) => {
            conv.require(r.converged, || "normal nodes did not converge".into());
            match oracle_gaps(&r) {
                Ok((state, fusion)) => conv.error(state.max(fusion), tol, || {
                    format!("state gap {state:.3e}, fusion gap {fusion:.3e}")
                }),
                Err(e) => conv.fail(|| e),
            }
            let reference = r
                .normal_reports()
                .next()
                .map(|n| n.final_state.clone())
                .unwrap_or_default();
            let deceivers: Vec<&[f64]> = r
                .nodes
                .iter()
                .filter(|n| n.role == NodeRole::Deception)
                .map(|n| n.final_state.as_slice())
                .collect();
            for pair in deceivers.windows(2) {
                let g = max_gap(pair[0], pair[1]);
                conv.require(g <= tol, || format!("deceivers disagree by {g:.3e}"));
            }
            for n in r.nodes.iter().filter(|n| n.role != NodeRole::Normal) {
                let g = max_gap(&n.final_state, &reference);
                conv.require(g > 1e-3, || {
                    format!("attacker {} sits {g:.3e} from the normal state", n.node)
                });
            }
            for n in r.normal_reports() {
                ident.cases += 1;
                let i = n.node.index();
                let near =
                    |a: usize| sc.graph.has_edge(a, i).unwrap_or(false) || sc.graph.has_edge(i, a).unwrap_or(false);
                let expect = |role: NodeRole| -> std::collections::BTreeSet<usize> {
                    r.nodes
                        .iter()
                        .filter(|m| m.role == role && near(m.node.index()))
                        .map(|m| m.node.index())
                        .collect()
                };
                let (dos, deceivers) = (expect(NodeRole::Dos), expect(NodeRole::Deception));
                ident.require(n.identified.dos == dos && n.identified.deceivers == deceivers, || {
                    format!(
                        "node {}: identified DoS {:?} deception {:?}, expected {:?} {:?}",
                        n.node,
                        one_based(&n.identified.dos),
                        one_based(&n.identified.deceivers),
                        one_based(&dos),
                        one_based(&deceivers)
                    )
                });
            }
        }
        Err(e) => {
            conv.fail(|| format!("run failed: {e}"));
            ident.fail(|| format!("run failed: {e}"));
        }
    }
    let conv_summary = "16 normal nodes on the mean and the oracle; attackers apart".to_string();
    let ident_summary = format!(
        "{} normal nodes identified their attacker neighbors exactly",
        ident.cases
    );
    [
        conv.finish(5, "recon20-under-attack", Some(tol), started, budget, conv_summary),
        ident.finish(6, "attacker-identification", None, started, budget, ident_summary),
    ]
}

fn one_based(set: &std::collections::BTreeSet<usize>) -> Vec<usize> {
    set.iter().map(|&i| i + 1).collect()
}

/// Internal and external eavesdroppers cannot pin down initial states, and the
/// external one can once weights travel in the clear.
pub fn privacy(runs: usize, seed: u64) -> CheckReport {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new();
    let mut targets = 0;
    for k in 0..runs {
        let n = rng.random_range(3..=10);
        let mut cfg = honest_config(n, seed * 1000 + k as u64, &mut rng);
        let spy = NodeId(rng.random_range(0..n));
        cfg.eavesdroppers = vec![EavesdropperKind::Internal { node: spy }, EavesdropperKind::External];
        t.cases += 1;
        let encrypted = match run_scenario(&cfg) {
            Ok(r) => r,
            Err(e) => {
                t.fail(|| format!("run {k}: {e}"));
                continue;
            }
        };
        for report in &encrypted.privacy {
            for v in &report.targets {
                let must_hide = match report.eavesdropper {
                    EavesdropperKind::Internal { .. } => v.other_out_neighbor,
                    EavesdropperKind::External => true,
                };
                if must_hide {
                    targets += 1;
                    t.require(!v.verdict.is_determined(), || {
                        format!("run {k}: {:?} determined node {}", report.eavesdropper, v.target)
                    });
                }
            }
        }
        cfg.eavesdroppers = vec![EavesdropperKind::External];
        cfg.params.encrypt_weights = false;
        match run_scenario(&cfg) {
            Ok(r) => {
                for v in r.privacy.iter().flat_map(|p| &p.targets) {
                    t.require(v.verdict.is_determined(), || {
                        format!("run {k}: clear-text weights left node {} undetermined", v.target)
                    });
                }
            }
            Err(e) => t.fail(|| format!("run {k} without encryption: {e}")),
        }
    }
    let summary =
        format!("{targets} protected targets stayed undetermined; the clear-text ablation determined every node");
    t.finish(7, "privacy", None, started, Duration::from_secs(60), summary)
}

/// Exhaustive round trip over the weight range and random homomorphic sums.
pub fn paillier(pairs: usize, seed: u64) -> CheckReport {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new();
    match PaillierKeypair::generate(64, GeneratorChoice::default(), &mut rng) {
        Ok(keys) => {
            let pk = &keys.public;
            for m in 0..=WEIGHT_SCALE {
                t.cases += 1;
                let back = pk.encrypt_u64(m, &mut rng).and_then(|c| keys.decrypt_u64(&c));
                t.require(back.as_ref().ok() == Some(&m), || {
                    format!("round trip of {m} gave {back:?}")
                });
            }
            let n = pk.modulus().clone();
            for _ in 0..pairs {
                t.cases += 1;
                let a = BigUint::from(rng.random::<u64>()) % &n;
                let b = BigUint::from(rng.random::<u64>()) % &n;
                let sum = pk
                    .encrypt(&a, &mut rng)
                    .and_then(|ca| pk.encrypt(&b, &mut rng).map(|cb| pk.add(&ca, &cb)))
                    .and_then(|c| keys.decrypt(&c));
                let want = (&a + &b) % &n;
                t.require(sum.as_ref().ok() == Some(&want), || {
                    format!("D(E({a}) E({b})) gave {sum:?}, want {want}")
                });
            }
        }
        Err(e) => t.fail(|| format!("key generation failed: {e}")),
    }
    let summary = format!("0..={WEIGHT_SCALE} round trips and {pairs} homomorphic sums exact");
    t.finish(8, "paillier", None, started, Duration::from_secs(30), summary)
}

/// Accepted high-conflict trials: the distributed pipeline should recover
/// the target class where plain Dempster combination never does.
pub fn high_conflict(wanted: usize, seed: u64) -> CheckReport {
    let started = Instant::now();
    let cfg = HighConflictConfig::default();
    let mut t = Tally::new();
    let summary = match run_high_conflict(&cfg, wanted, 200 * wanted, seed) {
        Ok(s) => {
            t.cases = s.accepted;
            t.require(s.accepted == wanted, || {
                format!("only {} of {} trials accepted", s.accepted, s.trials)
            });
            let rate = s.cefac_correct as f64 / s.accepted.max(1) as f64;
            t.require(rate >= 0.9, || {
                format!("distributed decision correct in {:.0}% of trials", 100.0 * rate)
            });
            t.require(s.dempster_wrong == s.accepted, || {
                "Dempster hit the target in an accepted trial".into()
            });
            format!(
                "distributed correct {}/{}, Dempster off target {}/{}, {} trials drawn",
                s.cefac_correct, s.accepted, s.dempster_wrong, s.accepted, s.trials
            )
        }
        Err(e) => {
            t.fail(|| format!("trial failed: {e}"));
            String::new()
        }
    };
    t.finish(9, "high-conflict", None, started, Duration::from_secs(300), summary)
}

/// Bitmask robustness predicates against subset enumeration.
pub fn robustness_predicates(graphs: usize, seed: u64) -> CheckReport {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new();
    let mut robust = [0usize; 2];
    for k in 0..graphs {
        let n = rng.random_range(1..=6);
        let g = random_digraph(n, rng.random_range(0.2..1.0), &mut rng);
        let p = rng.random_range(1..=6) as f64 / 6.0;
        t.cases += 1;
        let fast = (g.is_p_fraction_robust(p), g.is_strongly_p_fraction_robust(p));
        let slow = (naive_p_robust(&g, p), naive_strongly_p_robust(&g, p));
        robust[0] += usize::from(slow.0);
        robust[1] += usize::from(slow.1);
        t.require(fast == (Ok(slow.0), Ok(slow.1)), || {
            format!("graph {k} (N = {n}, p = {p:.3}): {fast:?} vs {slow:?}")
        });
    }
    let summary = format!(
        "{} p-robust and {} strongly p-robust graphs among {graphs}",
        robust[0], robust[1]
    );
    t.finish(
        10,
        "robustness-predicates",
        None,
        started,
        Duration::from_secs(30),
        summary,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for name in Suite::NAMES {
            assert_eq!(name.parse::<Suite>().unwrap().to_string(), name);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn small_runs_pass() {
        assert!(dempster_oracle(50, 5).passed);
        assert!(robustness_predicates(20, 5).passed);
    }
}
