//! Dempster-Shafer evidence algebra: frames of discernment, mass functions,
//! Dempster's rule, conflict, the pignistic transform, evidence distance and
//! per-event support.
//!
//! Everything here is generic over [`Scalar`](crate::Scalar) and free of shared state.
//!
//! ```
//! use std::sync::Arc;
//! use cefac_core::evidence::{FrameOfDiscernment, MassFunction};
//!
//! let frame = Arc::new(FrameOfDiscernment::new(["a", "b"]).unwrap());
//! let m1 = MassFunction::<f64>::from_named(frame.clone(), &[("a", 0.6), ("b", 0.3), ("a|b", 0.1)]).unwrap();
//! let m2 = MassFunction::<f64>::from_named(frame, &[("a", 0.5), ("b", 0.4), ("a|b", 0.1)]).unwrap();
//! assert!((m1.conflict(&m2).unwrap() - 0.39).abs() < 1e-12);
//! let fused = m1.combine(&m2).unwrap();
//! assert!(fused.betp().unwrap()[0] > 0.6);
//! ```

mod distance;
mod frame;
mod json;
mod mass;

pub use distance::{evidence_distance, support, support_with, EvidenceDistance, Jousselme};
pub use frame::{FrameOfDiscernment, MAX_EVENTS};
pub use mass::{betp, conflict_degree, dempster_combine, event_evidence, normalize, MassFunction};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvidenceError {
    #[error("a frame of discernment needs between 2 and {MAX_EVENTS} events, got {0}")]
    FrameSize(usize),
    #[error("duplicate event label `{0}`")]
    DuplicateLabel(String),
    #[error("event label `{0}` is empty or contains `|`")]
    InvalidLabel(String),
    #[error("unknown event label `{0}`")]
    UnknownLabel(String),
    #[error("subset mask {0} is outside the frame")]
    SubsetOutOfRange(usize),
    #[error("mass vector has {got} entries, the frame needs {expected}")]
    Length { expected: usize, got: usize },
    #[error("mass {value} on subset {subset} is outside [0, 1]")]
    MassOutOfRange { subset: String, value: f64 },
    #[error("masses sum to {0}, expected 1")]
    BadTotal(f64),
    #[error("mass functions are defined on different frames")]
    FrameMismatch,
    #[error("all mass is on the empty set; nothing to renormalize")]
    DegenerateMass,
    #[error("total conflict (K = 1) between the combined mass functions")]
    TotalConflict,
    #[error("mass function is subnormal (m(∅) = {0})")]
    SubnormalInput(f64),
    #[error("event index {index} out of range for a frame of {len} events")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("distance coefficient must be positive, got {0}")]
    NonpositiveTau(f64),
}
