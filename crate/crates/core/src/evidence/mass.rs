use std::sync::Arc;

use super::{EvidenceError, FrameOfDiscernment};
use crate::scalar::Scalar;

/// A basic belief assignment over the power set of a frame.
///
/// Masses are stored densely, one entry per subset bitmask, with the mass of the
/// empty set kept explicitly at index 0.
#[derive(Debug, Clone)]
pub struct MassFunction<T> {
    frame: Arc<FrameOfDiscernment>,
    masses: Vec<T>,
}

impl<T: Scalar> MassFunction<T> {
    /// Validates `masses` (one entry per subset, each in `[0, 1]`, summing to 1).
    pub fn new(frame: Arc<FrameOfDiscernment>, masses: Vec<T>) -> Result<Self, EvidenceError> {
        let expected = frame.subset_count();
        if masses.len() != expected {
            return Err(EvidenceError::Length {
                expected,
                got: masses.len(),
            });
        }
        let mut total = T::zero();
        for (mask, &value) in masses.iter().enumerate() {
            if !value.is_finite() || value < T::zero() || value > T::one() + T::MASS_TOLERANCE {
                return Err(EvidenceError::MassOutOfRange {
                    subset: frame.subset_name(mask),
                    value: value.as_f64(),
                });
            }
            total += value;
        }
        if (total - T::one()).abs() > T::MASS_TOLERANCE {
            return Err(EvidenceError::BadTotal(total.as_f64()));
        }
        Ok(Self { frame, masses })
    }

    /// Builds a mass function from `(subset mask, mass)` pairs; unlisted subsets get zero.
    pub fn from_focal(frame: Arc<FrameOfDiscernment>, focal: &[(usize, T)]) -> Result<Self, EvidenceError> {
        let mut masses = vec![T::zero(); frame.subset_count()];
        for &(mask, value) in focal {
            if mask >= masses.len() {
                return Err(EvidenceError::SubsetOutOfRange(mask));
            }
            masses[mask] += value;
        }
        Self::new(frame, masses)
    }

    /// Builds a mass function from `("a|b", mass)` pairs.
    pub fn from_named(frame: Arc<FrameOfDiscernment>, focal: &[(&str, T)]) -> Result<Self, EvidenceError> {
        let focal = focal
            .iter()
            .map(|&(name, v)| frame.parse_subset(name).map(|mask| (mask, v)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_focal(frame, &focal)
    }

    /// Total ignorance: all mass on the whole frame.
    pub fn vacuous(frame: Arc<FrameOfDiscernment>) -> Self {
        let mut masses = vec![T::zero(); frame.subset_count()];
        masses[frame.full_mask()] = T::one();
        Self { frame, masses }
    }

    /// Categorical evidence asserting that event `event` (0-based) is true.
    pub fn event(frame: Arc<FrameOfDiscernment>, event: usize) -> Result<Self, EvidenceError> {
        if event >= frame.len() {
            return Err(EvidenceError::IndexOutOfRange {
                index: event,
                len: frame.len(),
            });
        }
        let mut masses = vec![T::zero(); frame.subset_count()];
        masses[1 << event] = T::one();
        Ok(Self { frame, masses })
    }

    /// Rebuilds a mass function from the non-empty-subset vector used by the
    /// fusion layer (entry `k` is the mass of subset mask `k + 1`).
    pub fn from_nonempty(frame: Arc<FrameOfDiscernment>, values: &[T]) -> Result<Self, EvidenceError> {
        let mut masses = Vec::with_capacity(values.len() + 1);
        masses.push(T::zero());
        masses.extend_from_slice(values);
        Self::new(frame, masses)
    }

    /// Computed results skip validation; callers guarantee the invariants.
    pub(crate) fn from_parts(frame: Arc<FrameOfDiscernment>, masses: Vec<T>) -> Self {
        debug_assert_eq!(masses.len(), frame.subset_count());
        Self { frame, masses }
    }

    pub fn frame(&self) -> &FrameOfDiscernment {
        &self.frame
    }

    pub fn frame_arc(&self) -> &Arc<FrameOfDiscernment> {
        &self.frame
    }

    /// Dense mass vector indexed by subset bitmask.
    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    /// Masses of the non-empty subsets, in bitmask order (length `2^n - 1`).
    pub fn nonempty(&self) -> &[T] {
        &self.masses[1..]
    }

    #[inline]
    pub fn mass(&self, mask: usize) -> T {
        self.masses[mask]
    }

    pub fn empty_mass(&self) -> T {
        self.masses[0]
    }

    pub fn is_normalized(&self) -> bool {
        self.masses[0] == T::zero()
    }

    pub fn is_subnormal(&self) -> bool {
        self.masses[0] > T::zero()
    }

    /// Subsets carrying non-zero mass.
    pub fn focal_elements(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != T::zero())
            .map(|(k, &v)| (k, v))
    }

    pub(crate) fn same_frame(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.frame, &other.frame) || self.frame == other.frame
    }

    pub(crate) fn check_frame(&self, other: &Self) -> Result<(), EvidenceError> {
        if self.same_frame(other) {
            Ok(())
        } else {
            Err(EvidenceError::FrameMismatch)
        }
    }

    /// Redistributes the mass of the empty set proportionally over the other subsets.
    pub fn normalize(&self) -> Result<Self, EvidenceError> {
        let empty = self.masses[0];
        if empty == T::zero() {
            return Ok(self.clone());
        }
        let scale = T::one() - empty;
        if scale <= T::MASS_TOLERANCE {
            return Err(EvidenceError::DegenerateMass);
        }
        let mut masses: Vec<T> = self.masses.iter().map(|&v| v / scale).collect();
        masses[0] = T::zero();
        Ok(Self::from_parts(self.frame.clone(), masses))
    }

    /// Degree of conflict `K`: total product mass on pairs of disjoint subsets.
    pub fn conflict(&self, other: &Self) -> Result<T, EvidenceError> {
        self.check_frame(other)?;
        let rhs: Vec<(usize, T)> = other.focal_elements().collect();
        let mut k = T::zero();
        for (b, mb) in self.focal_elements() {
            for &(c, mc) in &rhs {
                if b & c == 0 {
                    k += mb * mc;
                }
            }
        }
        Ok(k)
    }

    /// Dempster's rule of combination.
    pub fn combine(&self, other: &Self) -> Result<Self, EvidenceError> {
        self.check_frame(other)?;
        let rhs: Vec<(usize, T)> = other.focal_elements().collect();
        let mut joint = vec![T::zero(); self.masses.len()];
        for (b, mb) in self.focal_elements() {
            for &(c, mc) in &rhs {
                joint[b & c] += mb * mc;
            }
        }
        // Normalize by the non-conflicting total rather than `1 − K`: equal
        // in exact arithmetic, but it keeps long combination chains summing
        // to one instead of amplifying rounding by `1 / (1 − K)` per step.
        let scale: T = joint[1..].iter().copied().sum();
        if scale <= T::CONFLICT_TOLERANCE {
            return Err(EvidenceError::TotalConflict);
        }
        joint[0] = T::zero();
        for v in joint.iter_mut().skip(1) {
            *v /= scale;
        }
        Ok(Self::from_parts(self.frame.clone(), joint))
    }

    /// Pignistic transform: each subset's mass is split evenly over its events.
    pub fn betp(&self) -> Result<Vec<T>, EvidenceError> {
        if self.is_subnormal() {
            return Err(EvidenceError::SubnormalInput(self.masses[0].as_f64()));
        }
        let n = self.frame.len();
        let mut probs = vec![T::zero(); n];
        for (mask, value) in self.focal_elements() {
            let share = value / T::lit(mask.count_ones() as f64);
            for (k, p) in probs.iter_mut().enumerate() {
                if mask & (1 << k) != 0 {
                    *p += share;
                }
            }
        }
        Ok(probs)
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> MassFunction<U> {
        MassFunction {
            frame: self.frame.clone(),
            masses: self.masses.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Largest entrywise absolute difference; frames must match.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T, EvidenceError> {
        self.check_frame(other)?;
        Ok(self
            .masses
            .iter()
            .zip(&other.masses)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max))
    }
}

impl<T: Scalar> PartialEq for MassFunction<T> {
    fn eq(&self, other: &Self) -> bool {
        self.same_frame(other) && self.masses == other.masses
    }
}

/// Renormalizes a subnormal mass function.
pub fn normalize<T: Scalar>(m: &MassFunction<T>) -> Result<MassFunction<T>, EvidenceError> {
    m.normalize()
}

/// Dempster's rule of combination; fails with `TotalConflict` when `K = 1`.
pub fn dempster_combine<T: Scalar>(
    m1: &MassFunction<T>,
    m2: &MassFunction<T>,
) -> Result<MassFunction<T>, EvidenceError> {
    m1.combine(m2)
}

pub fn conflict_degree<T: Scalar>(m1: &MassFunction<T>, m2: &MassFunction<T>) -> Result<T, EvidenceError> {
    m1.conflict(m2)
}

pub fn betp<T: Scalar>(m: &MassFunction<T>) -> Result<Vec<T>, EvidenceError> {
    m.betp()
}

/// All mass on the singleton of event `event` (0-based).
pub fn event_evidence<T: Scalar>(
    frame: &Arc<FrameOfDiscernment>,
    event: usize,
) -> Result<MassFunction<T>, EvidenceError> {
    MassFunction::event(frame.clone(), event)
}
