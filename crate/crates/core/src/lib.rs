//! Credibility-based evidence fusion over directed networks, with
//! privacy-preserving state decomposition and resilience to DoS and
//! deception attackers.
//!
//! The numeric layers ([`evidence`], [`fusion`]) are generic over [`Scalar`];
//! the aliases at the crate root fix them to `f64` (and `f32` where useful).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod digraph;
pub mod evidence;
pub mod fusion;
pub mod paillier;
pub mod protocol;
pub mod reference;
mod scalar;
pub mod sim;
pub mod verify;

pub use scalar::Scalar;

pub type MassFunction = evidence::MassFunction<f64>;
pub type MassFunction32 = evidence::MassFunction<f32>;
pub type WavccmeMatrix = fusion::WavccmeMatrix<f64>;
pub type WavccmeMatrix32 = fusion::WavccmeMatrix<f32>;
pub type FusionResult = fusion::FusionResult<f64>;
pub type NodeInitialState = fusion::NodeInitialState<f64>;
pub use digraph::{DirectedGraph, NodeId};
