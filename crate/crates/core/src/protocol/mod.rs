//! The per-node fusion protocol: private state decomposition with encrypted
//! weights, replicated storage of reconstructed states with majority and
//! f-fraction filtering, attacker identification, correction of the sums
//! the attackers disturbed, and the convergent state update.
//!
//! Rounds are synchronous. A message sent in round `t` is processed in
//! round `t + 1`:
//!
//! - round 0: split the initial state into shares, send shares and encrypted weights;
//! - round 1: reconstruct `x(1)`, record it in the own storage slot, broadcast storage;
//! - round 2: copy each in-neighbor's own slot;
//! - later rounds: filtered storage gossip, detection once storage is stable,
//!   correction gossip, and the state update.

mod correction;
mod message;
mod node;
mod state;
mod storage;

pub use correction::{
    compute_correction, consensus_update, correction_entry, AttackKind, CorrectionEntry, CorrectionRecord,
    CorrectionTable, LocalRecords,
};
pub use message::{Message, MessageKind, Payload, WeightPayload};
pub use node::{KeyDirectory, Phase, ProtocolConfig, ProtocolNode, Role};
pub use state::{
    decompose_state, flatten_state, kept_share, reconstruct_state, share_range, split_state, state_len, Decomposition,
};
pub use storage::{
    detect_attackers, same_value, storage_update, Detection, SlotValue, StorageParams, StorageVector, ThresholdRule,
    UpdateBranch,
};

pub(crate) use state::max_abs_diff;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("sent and received sub-states were not retained")]
    MissingLocalRecord,
    #[error("no node is known to be normal")]
    EmptyNormalSet,
    #[error("weight could not be decoded: {0}")]
    WeightDecodeFailure(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
}
