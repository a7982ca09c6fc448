//! Deterministic synchronous simulator: scenario files, the round engine,
//! centralized references, evidence generators and high-conflict trials.

mod config;
mod engine;
mod gaussian;
mod high_conflict;
mod scenarios;

pub use config::{
    Epsilon, EvidenceSpec, GraphModel, GraphSpec, ProtocolParams, RandomGraphSpec, Scenario, ScenarioConfig,
    SCHEMA_VERSION,
};
pub use engine::{
    run_scenario, run_validated, IdentifiedSets, NodeReport, NodeRole, OracleReport, PrivacyReport, RoundSnapshot,
    SimulationResult, TargetVerdict,
};
pub use gaussian::{generate_gaussian_evidence, likelihood_bba, GaussianGroup, GaussianSpec, DEFAULT_DISCOUNT};
pub use high_conflict::{
    dempster_fold, high_conflict_trial, linear_consensus, run_high_conflict, HighConflictConfig, HighConflictSummary,
    TrialRecord,
};
pub use scenarios::{gaussian5, random_mass_function, random_scenario, recon20, RandomScenarioParams, RECON20_JSON};

use thiserror::Error;

use crate::evidence::EvidenceError;
use crate::fusion::FusionError;
use crate::paillier::PaillierError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    ConfigInvalid(String),
    #[error("bad generator parameters: {0}")]
    BadParams(String),
    #[error("run broke a model assumption: {0}")]
    AssumptionViolated(String),
    #[error("linear consensus did not settle within {0} iterations")]
    ConsensusFailed(usize),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
}
