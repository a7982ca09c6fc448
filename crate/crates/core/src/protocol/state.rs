use std::collections::BTreeMap;

use rand::Rng;

use crate::fusion::NodeInitialState;

/// Length of a flattened state for a frame of `n_events` events:
/// `n · (2^n − 1)` weighted-evidence entries followed by `n` supports.
pub fn state_len(n_events: usize) -> usize {
    n_events * ((1 << n_events) - 1) + n_events
}

/// Flattens `{X, Y}` into one vector, `X` row-major first.
pub fn flatten_state(s: &NodeInitialState<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = s.weighted.iter().flatten().copied().collect();
    v.extend_from_slice(&s.support);
    v
}

/// Inverse of [`flatten_state`].
pub fn split_state(x: &[f64], n_events: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let width = (1 << n_events) - 1;
    let (xs, ys) = x.split_at(n_events * width);
    (xs.chunks(width).map(<[f64]>::to_vec).collect(), ys.to_vec())
}

/// Sub-states of a node's initial state: one kept, one per out-neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub own: Vec<f64>,
    pub shares: BTreeMap<usize, Vec<f64>>,
}

impl Decomposition {
    pub fn total(&self) -> Vec<f64> {
        let mut t = self.own.clone();
        for s in self.shares.values() {
            add_assign(&mut t, s);
        }
        t
    }
}

/// Half-width of the uniform distribution the random shares are drawn from.
pub fn share_range(x0: &[f64]) -> f64 {
    let peak = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (2.0 * peak).max(1.0)
}

/// Splits `x0` into a random share per out-neighbor, uniform in `[-R, R]`
/// per component, and a kept share that restores the exact sum.
pub fn decompose_state<R: Rng + ?Sized>(x0: &[f64], out_neighbors: &[usize], rng: &mut R) -> Decomposition {
    let r = share_range(x0);
    let shares: BTreeMap<usize, Vec<f64>> = out_neighbors
        .iter()
        .map(|&j| (j, x0.iter().map(|_| rng.random_range(-r..=r)).collect()))
        .collect();
    Decomposition {
        own: kept_share(x0, shares.values()),
        shares,
    }
}

/// `x0` minus every share, summed in a fixed order.
pub fn kept_share<'a>(x0: &[f64], shares: impl IntoIterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut own = x0.to_vec();
    for s in shares {
        for (o, v) in own.iter_mut().zip(s) {
            *o -= v;
        }
    }
    own
}

/// `x(1) = own + Σ_in ς_ji x_j^i + Σ_out (1 − ς_ij) x_i^j`. In-neighbors that
/// sent nothing are simply absent from `received`.
pub fn reconstruct_state(
    own: &[f64],
    received: &BTreeMap<usize, (Vec<f64>, f64)>,
    sent: &BTreeMap<usize, (Vec<f64>, f64)>,
) -> Vec<f64> {
    let mut x = own.to_vec();
    for (share, w) in received.values() {
        axpy(&mut x, *w, share);
    }
    for (share, w) in sent.values() {
        axpy(&mut x, 1.0 - w, share);
    }
    x
}

pub(crate) fn add_assign(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

pub(crate) fn axpy(acc: &mut [f64], k: f64, v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += k * b;
    }
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_round_trip() {
        assert_eq!(state_len(3), 3 * 7 + 3);
        let s = NodeInitialState {
            support: vec![0.5, 0.25],
            weighted: vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
        };
        let x = flatten_state(&s);
        assert_eq!(x, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5, 0.25]);
        assert_eq!(split_state(&x, 2), (s.weighted, s.support));
    }

    #[test]
    fn decomposition_without_out_neighbors_keeps_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = decompose_state(&[1.0, -2.0], &[], &mut rng);
        assert_eq!(d.own, vec![1.0, -2.0]);
        assert!(d.shares.is_empty());
    }

    #[test]
    fn decomposition_sums_and_varies_with_seed() {
        let x0 = vec![0.3, 0.7, 1.2, 0.0, 5.0];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let d = decompose_state(&x0, &[1, 4, 7], &mut rng);
            assert!(max_abs_diff(&d.total(), &x0) < 1e-12);
            let r = share_range(&x0);
            assert!(d.shares.values().flatten().all(|v| v.abs() <= r));
        }
        let a = decompose_state(&x0, &[1, 2], &mut ChaCha8Rng::seed_from_u64(3));
        let b = decompose_state(&x0, &[1, 2], &mut ChaCha8Rng::seed_from_u64(4));
        assert_ne!(a, b);
    }

    #[test]
    fn reconstruction_cases() {
        let none = BTreeMap::new();
        assert_eq!(reconstruct_state(&[1.0, 2.0], &none, &none), vec![1.0, 2.0]);
        // Two nodes, both weights 1: node 0 keeps its own share, gains all of
        // node 1's share to it, and hands over all of its share to node 1.
        let received = BTreeMap::from([(1, (vec![10.0], 1.0))]);
        let sent = BTreeMap::from([(1, (vec![3.0], 1.0))]);
        assert_eq!(reconstruct_state(&[2.0], &received, &sent), vec![12.0]);
    }
}
