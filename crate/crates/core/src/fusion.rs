//! Credibility-weighted fusion.
//!
//! Each piece of evidence is weighted, per event, by its conditional
//! credibility: its support for that event normalized over all evidence.
//! Stacking the weighted averages for every event gives the WAVCCME matrix,
//! which is all a node needs to finish the fusion locally. The matrix can be
//! built centrally from the evidence, or from two sums that a network can
//! compute by average consensus: the summed support-weighted evidence (KPEEV)
//! and the summed supports (EVE).

use std::sync::Arc;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::evidence::{support, EvidenceError, FrameOfDiscernment, MassFunction};
use crate::scalar::Scalar;

/// Iteration cap for [`iterative_fusion`].
pub const DEFAULT_MAX_ITERATIONS: usize = 1000;
/// Default stopping threshold on the L2 change of the event probabilities.
pub const DEFAULT_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error("no evidence to fuse")]
    EmptyInput,
    #[error("support values must be positive, found {0}")]
    NonpositiveSupport(f64),
    #[error("summed support for event {event} is {value}; it must be positive")]
    ZeroSupport { event: usize, value: f64 },
    #[error("expected a {rows} x {cols} matrix, got {got_rows} x {got_cols}")]
    Dimension {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("column for event {event} is not a mass function: {reason}")]
    InvalidColumn { event: usize, reason: String },
    #[error("fusion needs at least one normal node")]
    InvalidNodeCount,
    #[error("stopping threshold must be positive, got {0}")]
    NonpositiveDelta(f64),
    #[error("event probabilities did not settle within {0} iterations")]
    NoConvergence(usize),
}

/// A node's contribution before consensus: its event-support vector and the
/// support-weighted copies of its evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInitialState<T> {
    /// `support[j]` is the support of the evidence for event `j`.
    pub support: Vec<T>,
    /// Row `j` is `support[j]` times the non-empty-subset mass vector.
    pub weighted: Vec<Vec<T>>,
}

impl<T: Scalar> NodeInitialState<T> {
    pub fn n_events(&self) -> usize {
        self.support.len()
    }
}

/// Event supports and support-weighted evidence for one mass function.
pub fn build_initial_state<T: Scalar>(m: &MassFunction<T>, tau: T) -> Result<NodeInitialState<T>, FusionError> {
    let n = m.frame().len();
    let support = (0..n).map(|j| support(m, j, tau)).collect::<Result<Vec<_>, _>>()?;
    let weighted = support
        .iter()
        .map(|&s| m.nonempty().iter().map(|&v| s * v).collect())
        .collect();
    Ok(NodeInitialState { support, weighted })
}

/// Row-normalizes an `n × N` support matrix into conditional credibilities.
pub fn conditional_credibility<T: Scalar>(supports: &[Vec<T>]) -> Result<Vec<Vec<T>>, FusionError> {
    if supports.is_empty() || supports[0].is_empty() {
        return Err(FusionError::EmptyInput);
    }
    let cols = supports[0].len();
    supports
        .iter()
        .map(|row| {
            if row.len() != cols {
                return Err(FusionError::Dimension {
                    rows: supports.len(),
                    cols,
                    got_rows: supports.len(),
                    got_cols: row.len(),
                });
            }
            if let Some(&bad) = row.iter().find(|&&s| !(s > T::zero())) {
                return Err(FusionError::NonpositiveSupport(bad.as_f64()));
            }
            let total: T = row.iter().copied().sum();
            Ok(row.iter().map(|&s| s / total).collect())
        })
        .collect()
}

/// The credibility-weighted average evidence, one column per conditioning event.
#[derive(Debug, Clone, PartialEq)]
pub struct WavccmeMatrix<T> {
    frame: Arc<FrameOfDiscernment>,
    /// `columns[j]` holds masses of the non-empty subsets, in bitmask order.
    columns: Vec<Vec<T>>,
}

impl<T: Scalar> WavccmeMatrix<T> {
    pub fn frame(&self) -> &Arc<FrameOfDiscernment> {
        &self.frame
    }

    pub fn columns(&self) -> &[Vec<T>] {
        &self.columns
    }

    pub fn column(&self, event: usize) -> &[T] {
        &self.columns[event]
    }

    pub fn column_mass(&self, event: usize) -> Result<MassFunction<T>, EvidenceError> {
        MassFunction::from_nonempty(self.frame.clone(), &self.columns[event])
    }

    /// Mixes the columns with event probabilities `probs`: `M · P`.
    pub fn mix(&self, probs: &[T]) -> MassFunction<T> {
        let len = self.frame.subset_count();
        let mut masses = vec![T::zero(); len];
        for (col, &p) in self.columns.iter().zip(probs) {
            for (slot, &v) in masses[1..].iter_mut().zip(col) {
                *slot += p * v;
            }
        }
        MassFunction::from_parts(self.frame.clone(), masses)
    }

    /// Largest entrywise absolute difference to another matrix on the same frame.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.columns
            .iter()
            .flatten()
            .zip(other.columns.iter().flatten())
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }
}

impl<T: Scalar> Serialize for WavccmeMatrix<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let subsets: Vec<String> = (1..self.frame.subset_count())
            .map(|mask| self.frame.subset_name(mask))
            .collect();
        let columns: Vec<Vec<f64>> = self
            .columns
            .iter()
            .map(|c| c.iter().map(|v| v.as_f64()).collect())
            .collect();
        let mut s = serializer.serialize_struct("WavccmeMatrix", 3)?;
        s.serialize_field("frame", &*self.frame)?;
        s.serialize_field("subsets", &subsets)?;
        s.serialize_field("columns", &columns)?;
        s.end()
    }
}

/// Builds the matrix from the summed weighted evidence and summed supports:
/// column `j` is row `j` of `x_sum` divided by `y_sum[j]`.
///
/// Entries within [`Scalar::CONSENSUS_TOLERANCE`] below zero are clamped and
/// each column is rescaled to sum to one; anything further off is rejected.
pub fn assemble_wavccme<T: Scalar>(
    frame: Arc<FrameOfDiscernment>,
    x_sum: &[Vec<T>],
    y_sum: &[T],
) -> Result<WavccmeMatrix<T>, FusionError> {
    let n = frame.len();
    let width = frame.subset_count() - 1;
    if x_sum.len() != n || y_sum.len() != n || x_sum.iter().any(|r| r.len() != width) {
        return Err(FusionError::Dimension {
            rows: n,
            cols: width,
            got_rows: x_sum.len(),
            got_cols: x_sum.first().map_or(0, Vec::len),
        });
    }
    let tol = T::CONSENSUS_TOLERANCE;
    let mut columns = Vec::with_capacity(n);
    for (event, (row, &y)) in x_sum.iter().zip(y_sum).enumerate() {
        if !(y > T::zero()) {
            return Err(FusionError::ZeroSupport {
                event,
                value: y.as_f64(),
            });
        }
        let mut col = Vec::with_capacity(width);
        for &x in row {
            let v = x / y;
            if v < -tol || !v.is_finite() {
                return Err(FusionError::InvalidColumn {
                    event,
                    reason: format!("negative mass {}", v.as_f64()),
                });
            }
            col.push(v.max(T::zero()));
        }
        let total: T = col.iter().copied().sum();
        if (total - T::one()).abs() > tol {
            return Err(FusionError::InvalidColumn {
                event,
                reason: format!("masses sum to {}", total.as_f64()),
            });
        }
        col.iter_mut().for_each(|v| *v /= total);
        columns.push(col);
    }
    Ok(WavccmeMatrix { frame, columns })
}

/// Sums per-node initial states and assembles the matrix.
pub fn wavccme_from_states<T: Scalar>(
    frame: Arc<FrameOfDiscernment>,
    states: &[NodeInitialState<T>],
) -> Result<WavccmeMatrix<T>, FusionError> {
    let first = states.first().ok_or(FusionError::EmptyInput)?;
    let mut x_sum = vec![vec![T::zero(); first.weighted[0].len()]; first.n_events()];
    let mut y_sum = vec![T::zero(); first.n_events()];
    for s in states {
        for (acc, row) in x_sum.iter_mut().zip(&s.weighted) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        for (a, &v) in y_sum.iter_mut().zip(&s.support) {
            *a += v;
        }
    }
    assemble_wavccme(frame, &x_sum, &y_sum)
}

/// Direct evaluation of `Σ_i m_i ⊗ P(c_i | A)` from the raw evidence.
pub fn centralized_wavccme<T: Scalar>(evidence: &[MassFunction<T>], tau: T) -> Result<WavccmeMatrix<T>, FusionError> {
    let first = evidence.first().ok_or(FusionError::EmptyInput)?;
    for m in &evidence[1..] {
        first.check_frame(m)?;
    }
    let n = first.frame().len();
    let mut supports = vec![Vec::with_capacity(evidence.len()); n];
    for m in evidence {
        for (j, row) in supports.iter_mut().enumerate() {
            row.push(support(m, j, tau)?);
        }
    }
    let cred = conditional_credibility(&supports)?;
    let width = first.frame().subset_count() - 1;
    let columns = cred
        .iter()
        .map(|row| {
            let mut col = vec![T::zero(); width];
            for (m, &w) in evidence.iter().zip(row) {
                for (c, &v) in col.iter_mut().zip(m.nonempty()) {
                    *c += w * v;
                }
            }
            col
        })
        .collect();
    Ok(WavccmeMatrix {
        frame: first.frame_arc().clone(),
        columns,
    })
}

/// Combines `m` with itself `count` times by repeated Dempster combination.
pub fn n_fold_self_combine<T: Scalar>(m: &MassFunction<T>, count: usize) -> Result<MassFunction<T>, FusionError> {
    let mut acc = m.clone();
    for _ in 0..count {
        acc = acc.combine(m)?;
    }
    Ok(acc)
}

/// Outcome of the local fusion loop.
#[derive(Debug, Clone)]
pub struct FusionResult<T> {
    pub fused: MassFunction<T>,
    pub event_probs: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> Serialize for FusionResult<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let probs: Vec<f64> = self.event_probs.iter().map(|v| v.as_f64()).collect();
        let mut s = serializer.serialize_struct("FusionResult", 4)?;
        s.serialize_field("fused", &self.fused)?;
        s.serialize_field("event_probs", &probs)?;
        s.serialize_field("iterations", &self.iterations)?;
        s.serialize_field("converged", &self.converged)?;
        s.end()
    }
}

impl<T: Scalar> FusionResult<T> {
    /// Index of the most probable event (first one on ties).
    pub fn decision(&self) -> usize {
        argmax(&self.event_probs)
    }
}

pub(crate) fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

/// One pass of the fusion loop: mix the matrix with `probs`, self-combine
/// `n_nodes - 1` times, and take the pignistic probabilities.
pub fn fusion_step<T: Scalar>(
    w: &WavccmeMatrix<T>,
    n_nodes: usize,
    probs: &[T],
) -> Result<(MassFunction<T>, Vec<T>), FusionError> {
    let averaged = w.mix(probs);
    let fused = n_fold_self_combine(&averaged, n_nodes.saturating_sub(1))?;
    let next = fused.betp()?;
    Ok((fused, next))
}

/// Local fusion from a WAVCCME matrix, starting from uniform event priors.
pub fn iterative_fusion<T: Scalar>(
    w: &WavccmeMatrix<T>,
    n_nodes: usize,
    delta: T,
) -> Result<FusionResult<T>, FusionError> {
    iterative_fusion_capped(w, n_nodes, delta, DEFAULT_MAX_ITERATIONS)
}

pub fn iterative_fusion_capped<T: Scalar>(
    w: &WavccmeMatrix<T>,
    n_nodes: usize,
    delta: T,
    max_iterations: usize,
) -> Result<FusionResult<T>, FusionError> {
    if n_nodes == 0 {
        return Err(FusionError::InvalidNodeCount);
    }
    if !(delta > T::zero()) {
        return Err(FusionError::NonpositiveDelta(delta.as_f64()));
    }
    let n = w.frame.len();
    let mut probs = vec![T::one() / T::lit(n as f64); n];
    for iteration in 1..=max_iterations {
        let (fused, next) = fusion_step(w, n_nodes, &probs)?;
        let change = probs
            .iter()
            .zip(&next)
            .map(|(a, b)| (*a - *b) * (*a - *b))
            .sum::<T>()
            .sqrt();
        if change <= delta {
            return Ok(FusionResult {
                fused,
                event_probs: next,
                iterations: iteration,
                converged: true,
            });
        }
        probs = next;
    }
    Err(FusionError::NoConvergence(max_iterations))
}

/// Fusion of a set of evidence as a single fusion centre would do it.
pub fn centralized_reference<T: Scalar>(
    evidence: &[MassFunction<T>],
    tau: T,
    delta: T,
) -> Result<FusionResult<T>, FusionError> {
    let w = centralized_wavccme(evidence, tau)?;
    iterative_fusion(&w, evidence.len(), delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(n: usize) -> Arc<FrameOfDiscernment> {
        Arc::new(FrameOfDiscernment::numbered(n).unwrap())
    }

    fn mass(f: &Arc<FrameOfDiscernment>, focal: &[(&str, f64)]) -> MassFunction<f64> {
        MassFunction::from_named(f.clone(), focal).unwrap()
    }

    #[test]
    fn initial_state_of_event_evidence() {
        let f = frame(3);
        let m = MassFunction::<f64>::event(f, 0).unwrap();
        let s = build_initial_state(&m, 1.7).unwrap();
        assert_eq!(s.support[0], 1.0);
        assert_eq!(s.weighted[0], m.nonempty());
    }

    #[test]
    fn initial_state_has_kronecker_structure() {
        let f = frame(3);
        let m = mass(&f, &[("A1", 0.2), ("A2|A3", 0.5), ("A1|A2|A3", 0.3)]);
        let s = build_initial_state(&m, 2.0).unwrap();
        for (row, &y) in s.weighted.iter().zip(&s.support) {
            assert!(y > 0.0 && y <= 1.0);
            for (x, v) in row.iter().zip(m.nonempty()) {
                assert!((x / y - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn symmetric_evidence_has_equal_supports() {
        let f = frame(2);
        let m = mass(&f, &[("A1", 0.5), ("A2", 0.5)]);
        let s = build_initial_state(&m, 1.0).unwrap();
        assert_eq!(s.support[0], s.support[1]);
    }

    #[test]
    fn credibility_cases() {
        let single = conditional_credibility(&[vec![0.3], vec![0.9]]).unwrap();
        assert_eq!(single, vec![vec![1.0], vec![1.0]]);
        let twins = conditional_credibility(&[vec![0.4, 0.4], vec![0.7, 0.7]]).unwrap();
        assert_eq!(twins, vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert_eq!(
            conditional_credibility::<f64>(&[]).unwrap_err(),
            FusionError::EmptyInput
        );
        assert!(matches!(
            conditional_credibility(&[vec![0.0, 1.0]]),
            Err(FusionError::NonpositiveSupport(_))
        ));
    }

    #[test]
    fn single_node_matrix_repeats_its_evidence() {
        let f = frame(3);
        let m = mass(&f, &[("A1", 0.6), ("A2", 0.1), ("A1|A3", 0.3)]);
        let s = build_initial_state(&m, 3.0).unwrap();
        let w = assemble_wavccme(f.clone(), &s.weighted, &s.support).unwrap();
        let c = centralized_wavccme(std::slice::from_ref(&m), 3.0).unwrap();
        for j in 0..3 {
            for (a, b) in w.column(j).iter().zip(m.nonempty()) {
                assert!((a - b).abs() < 1e-15);
            }
            assert_eq!(c.column(j), m.nonempty());
        }
    }

    #[test]
    fn zero_support_is_rejected() {
        let f = frame(2);
        let x = vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 0.0]];
        let err = assemble_wavccme(f, &x, &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, FusionError::ZeroSupport { event: 1, .. }));
    }

    #[test]
    fn self_combination_counts() {
        let f = frame(2);
        let m = mass(&f, &[("A1", 0.5), ("A2", 0.3), ("A1|A2", 0.2)]);
        assert_eq!(n_fold_self_combine(&m, 0).unwrap(), m);
        assert_eq!(n_fold_self_combine(&m, 1).unwrap(), m.combine(&m).unwrap());
    }

    #[test]
    fn identical_columns_make_priors_irrelevant() {
        let f = frame(3);
        let m = mass(&f, &[("A1", 0.5), ("A2", 0.2), ("A2|A3", 0.3)]);
        let w = centralized_wavccme(&[m.clone(), m.clone(), m.clone()], 2.0).unwrap();
        let r = iterative_fusion(&w, 3, 1e-9).unwrap();
        let expected = n_fold_self_combine(&m, 2).unwrap();
        assert!(r.fused.max_abs_diff(&expected).unwrap() < 1e-12);
        assert!((r.event_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(r.event_probs, r.fused.betp().unwrap());
    }

    #[test]
    fn two_identical_pieces_fuse_to_self_combination() {
        let f = frame(2);
        let m = mass(&f, &[("A1", 0.7), ("A2", 0.2), ("A1|A2", 0.1)]);
        let r = centralized_reference(&[m.clone(), m.clone()], 1.0, 1e-9).unwrap();
        assert!(r.fused.max_abs_diff(&m.combine(&m).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn converged_probabilities_are_a_fixed_point() {
        let f = frame(3);
        let ev = vec![
            mass(&f, &[("A1", 0.6), ("A2", 0.3), ("A1|A2|A3", 0.1)]),
            mass(&f, &[("A1", 0.5), ("A3", 0.2), ("A1|A3", 0.3)]),
            mass(&f, &[("A2", 0.9), ("A1|A2|A3", 0.1)]),
            mass(&f, &[("A1", 0.7), ("A2", 0.1), ("A1|A2", 0.2)]),
        ];
        let delta = 1e-6;
        let w = centralized_wavccme(&ev, 2.0).unwrap();
        let r = iterative_fusion(&w, ev.len(), delta).unwrap();
        let (_, again) = fusion_step(&w, ev.len(), &r.event_probs).unwrap();
        let change: f64 = again
            .iter()
            .zip(&r.event_probs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(change <= delta);
        assert_eq!(r.decision(), 0);
    }

    #[test]
    fn fusion_argument_checks() {
        let f = frame(2);
        let m = mass(&f, &[("A1", 1.0)]);
        let w = centralized_wavccme(&[m], 1.0).unwrap();
        assert_eq!(
            iterative_fusion(&w, 0, 1e-6).unwrap_err(),
            FusionError::InvalidNodeCount
        );
        assert!(matches!(
            iterative_fusion(&w, 2, 0.0),
            Err(FusionError::NonpositiveDelta(_))
        ));
    }
}
