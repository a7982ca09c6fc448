use std::sync::Arc;

use super::{EvidenceError, FrameOfDiscernment, MassFunction};
use crate::scalar::Scalar;

/// A dissimilarity between two mass functions on the same frame, bounded in `[0, 1]`.
pub trait EvidenceDistance<T: Scalar> {
    fn distance(&self, a: &MassFunction<T>, b: &MassFunction<T>) -> Result<T, EvidenceError>;
}

/// Jousselme distance with the Jaccard similarity matrix over non-empty subsets:
/// `sqrt(0.5 * (a - b)^T D (a - b))`, `D(A, B) = |A ∩ B| / |A ∪ B|`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Jousselme;

impl<T: Scalar> EvidenceDistance<T> for Jousselme {
    fn distance(&self, a: &MassFunction<T>, b: &MassFunction<T>) -> Result<T, EvidenceError> {
        a.check_frame(b)?;
        // Only subsets where the masses differ contribute.
        let diff: Vec<(usize, T)> = a
            .masses()
            .iter()
            .zip(b.masses())
            .enumerate()
            .skip(1)
            .filter_map(|(mask, (&x, &y))| {
                let d = x - y;
                (d != T::zero()).then_some((mask, d))
            })
            .collect();
        let mut quad = T::zero();
        for &(s, ds) in &diff {
            for &(r, dr) in &diff {
                let inter = (s & r).count_ones();
                if inter == 0 {
                    continue;
                }
                let union = (s | r).count_ones();
                quad += ds * dr * T::lit(inter as f64) / T::lit(union as f64);
            }
        }
        let half = T::lit(0.5) * quad;
        Ok(half.max(T::zero()).sqrt().min(T::one()))
    }
}

pub fn evidence_distance<T: Scalar>(a: &MassFunction<T>, b: &MassFunction<T>) -> Result<T, EvidenceError> {
    Jousselme.distance(a, b)
}

/// Support of `m` for event `event`: `exp(-tau * d(m, m_event))`.
pub fn support<T: Scalar>(m: &MassFunction<T>, event: usize, tau: T) -> Result<T, EvidenceError> {
    support_with(&Jousselme, m, event, tau)
}

pub fn support_with<T: Scalar, D: EvidenceDistance<T> + ?Sized>(
    metric: &D,
    m: &MassFunction<T>,
    event: usize,
    tau: T,
) -> Result<T, EvidenceError> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(EvidenceError::NonpositiveTau(tau.as_f64()));
    }
    if m.is_subnormal() {
        return Err(EvidenceError::SubnormalInput(m.empty_mass().as_f64()));
    }
    let frame: &Arc<FrameOfDiscernment> = m.frame_arc();
    let target = MassFunction::event(frame.clone(), event)?;
    let d = metric.distance(m, &target)?;
    Ok((-tau * d).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(n: usize) -> Arc<FrameOfDiscernment> {
        Arc::new(FrameOfDiscernment::numbered(n).unwrap())
    }

    #[test]
    fn distance_identity_and_disjoint_singletons() {
        let f = frame(2);
        let a = MassFunction::<f64>::event(f.clone(), 0).unwrap();
        let b = MassFunction::<f64>::event(f.clone(), 1).unwrap();
        assert_eq!(evidence_distance(&a, &a).unwrap(), 0.0);
        // v = (1, -1, 0), v^T D v = 2
        assert!((evidence_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distance_against_dense_quadratic_form() {
        // Dense evaluation of the Jaccard quadratic form for a hand-picked pair.
        let f = frame(3);
        let a = MassFunction::<f64>::from_named(f.clone(), &[("A1", 0.5), ("A1|A2", 0.3), ("A1|A2|A3", 0.2)]).unwrap();
        let b = MassFunction::<f64>::from_named(f.clone(), &[("A2", 0.4), ("A3", 0.4), ("A2|A3", 0.2)]).unwrap();
        let mut quad = 0.0;
        for s in 1..8usize {
            for r in 1..8usize {
                let jac = (s & r).count_ones() as f64 / (s | r).count_ones() as f64;
                quad += (a.mass(s) - b.mass(s)) * jac * (a.mass(r) - b.mass(r));
            }
        }
        let expected = (0.5 * quad).sqrt();
        assert!((evidence_distance(&a, &b).unwrap() - expected).abs() < 1e-15);
        assert!((evidence_distance(&b, &a).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn support_cases() {
        let f = frame(3);
        let e = MassFunction::<f64>::event(f.clone(), 2).unwrap();
        assert_eq!(support(&e, 2, 3.0).unwrap(), 1.0);
        // d({A1}, {A2}) = 1, so tau = ln 2 gives support 1/2.
        let a1 = MassFunction::<f64>::event(f.clone(), 0).unwrap();
        assert!((support(&a1, 1, std::f64::consts::LN_2).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(support(&a1, 0, 0.0), Err(EvidenceError::NonpositiveTau(_))));
        assert!(matches!(support(&a1, 0, -1.0), Err(EvidenceError::NonpositiveTau(_))));
    }

    #[test]
    fn support_decreases_with_distance() {
        let f = frame(2);
        let mut last = f64::INFINITY;
        for k in 0..=10 {
            let x = 1.0 - k as f64 / 10.0;
            let m = MassFunction::<f64>::from_named(f.clone(), &[("A1", x), ("A2", 1.0 - x)]).unwrap();
            let s = support(&m, 0, 2.0).unwrap();
            assert!(s < last);
            last = s;
        }
    }
}
