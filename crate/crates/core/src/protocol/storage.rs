use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize, Serializer};

/// A reconstructed state as carried in storage slots. Shared, never mutated.
pub type SlotValue = Arc<Vec<f64>>;

/// Bitwise equality: relayed values are copies, so exact comparison is sound.
pub fn same_value(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// How many agreeing storage vectors it takes to adopt a slot when every
/// in-neighbor delivered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    /// More than `f · d` vectors, i.e. at least `⌊f · d⌋ + 1`.
    #[default]
    AboveFraction,
    /// More than `f · d + 1` vectors.
    AboveFractionPlusOne,
}

impl ThresholdRule {
    /// Smallest agreeing count that adopts a value.
    pub fn min_count(self, f: f64, in_degree: usize) -> usize {
        let base = (f * in_degree as f64 + 1e-9).floor() as usize + 1;
        match self {
            ThresholdRule::AboveFraction => base,
            ThresholdRule::AboveFractionPlusOne => base + 1,
        }
    }
}

/// Replicated record of every node's reconstructed state.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageVector {
    slots: Vec<Option<SlotValue>>,
}

impl StorageVector {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            slots: vec![None; n_nodes],
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<&SlotValue> {
        self.slots[k].as_ref()
    }

    pub fn slots(&self) -> &[Option<SlotValue>] {
        &self.slots
    }

    pub fn filled(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    /// Fills an empty slot. Returns whether anything changed.
    pub fn fill(&mut self, k: usize, value: SlotValue) -> bool {
        if self.slots[k].is_some() {
            return false;
        }
        self.slots[k] = Some(value);
        true
    }

    /// Overwrites a slot regardless of its content; used by scripted attackers only.
    pub fn set(&mut self, k: usize, value: Option<SlotValue>) {
        self.slots[k] = value;
    }
}

impl Serialize for StorageVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let slots: Vec<Option<&Vec<f64>>> = self.slots.iter().map(|s| s.as_deref()).collect();
        slots.serialize(serializer)
    }
}

/// Which acceptance branch a round used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateBranch {
    /// Round 2: copy each in-neighbor's own slot.
    Trust,
    /// Fewer vectors than in-neighbors: strict majority of what arrived.
    Majority,
    /// All in-neighbors delivered: more than the f-fraction threshold.
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageParams {
    pub f: f64,
    pub rule: ThresholdRule,
}

/// Applies one round of storage acceptance for `owner`. Returns the branch
/// taken and how many slots were filled.
pub fn storage_update(
    storage: &mut StorageVector,
    owner: usize,
    received: &[(usize, &StorageVector)],
    in_degree: usize,
    params: StorageParams,
    round: usize,
) -> (UpdateBranch, usize) {
    if round <= 2 {
        let mut changed = 0;
        for &(sender, s) in received {
            if sender != owner {
                if let Some(v) = s.get(sender) {
                    changed += usize::from(storage.fill(sender, v.clone()));
                }
            }
        }
        return (UpdateBranch::Trust, changed);
    }
    let (branch, needed) = if received.len() < in_degree {
        (UpdateBranch::Majority, received.len() / 2 + 1)
    } else {
        (UpdateBranch::Threshold, params.rule.min_count(params.f, in_degree))
    };
    if received.is_empty() {
        return (branch, 0);
    }
    let mut changed = 0;
    for k in 0..storage.len() {
        if k == owner || storage.get(k).is_some() {
            continue;
        }
        if let Some(v) = agreed_value(received.iter().filter_map(|(_, s)| s.get(k)), needed) {
            storage.fill(k, v);
            changed += 1;
        }
    }
    (branch, changed)
}

/// The value held by the most vectors, if that count reaches `needed` and no
/// other value ties with it.
fn agreed_value<'a>(values: impl Iterator<Item = &'a SlotValue>, needed: usize) -> Option<SlotValue> {
    let mut groups: Vec<(&SlotValue, usize)> = Vec::new();
    for v in values {
        match groups.iter_mut().find(|(g, _)| same_value(g, v)) {
            Some((_, c)) => *c += 1,
            None => groups.push((v, 1)),
        }
    }
    let best = groups.iter().map(|(_, c)| *c).max()?;
    let mut top = groups.iter().filter(|(_, c)| *c == best);
    let (value, _) = top.next()?;
    (best >= needed && top.next().is_none()).then(|| (*value).clone())
}

/// Attackers among a node's in-neighbors, judged from the storage vectors
/// they delivered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Detection {
    pub dos: BTreeSet<usize>,
    pub deceivers: BTreeSet<usize>,
}

/// DoS neighbors never delivered a storage vector; deceivers asserted a slot
/// value that contradicts the accepted one.
pub fn detect_attackers(
    history: &[Vec<(usize, Arc<StorageVector>)>],
    accepted: &StorageVector,
    in_neighbors: &[usize],
) -> Detection {
    let mut delivered = BTreeSet::new();
    let mut deceivers = BTreeSet::new();
    for (sender, s) in history.iter().flatten() {
        delivered.insert(*sender);
        let lied = s
            .slots()
            .iter()
            .zip(accepted.slots())
            .any(|(claim, truth)| match (claim, truth) {
                (Some(c), Some(t)) => !same_value(c, t),
                _ => false,
            });
        if lied {
            deceivers.insert(*sender);
        }
    }
    Detection {
        dos: in_neighbors
            .iter()
            .copied()
            .filter(|j| !delivered.contains(j))
            .collect(),
        deceivers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn val(x: f64) -> SlotValue {
        Arc::new(vec![x, 1.0])
    }

    fn vector(entries: &[(usize, f64)], n: usize) -> StorageVector {
        let mut s = StorageVector::new(n);
        for &(k, x) in entries {
            s.fill(k, val(x));
        }
        s
    }

    const PARAMS: StorageParams = StorageParams {
        f: 0.25,
        rule: ThresholdRule::AboveFraction,
    };

    #[test]
    fn thresholds() {
        assert_eq!(ThresholdRule::AboveFraction.min_count(0.25, 4), 2);
        assert_eq!(ThresholdRule::AboveFraction.min_count(1.0 / 6.0, 6), 2);
        assert_eq!(ThresholdRule::AboveFraction.min_count(1.0 / 6.0, 5), 1);
        assert_eq!(ThresholdRule::AboveFraction.min_count(0.0, 3), 1);
        assert_eq!(ThresholdRule::AboveFractionPlusOne.min_count(0.25, 4), 3);
    }

    #[test]
    fn trust_round_copies_own_slots() {
        let mut s = vector(&[(0, 9.0)], 3);
        let a = vector(&[(1, 1.0)], 3);
        let b = vector(&[(2, 2.0), (0, 5.0)], 3);
        let (branch, changed) = storage_update(&mut s, 0, &[(1, &a), (2, &b)], 2, PARAMS, 2);
        assert_eq!((branch, changed), (UpdateBranch::Trust, 2));
        assert_eq!(s.get(0).unwrap()[0], 9.0);
        assert_eq!(s.get(2).unwrap()[0], 2.0);
    }

    #[test]
    fn lone_deceiver_value_is_not_adopted() {
        let mut s = StorageVector::new(6);
        let honest = vector(&[(5, 1.0)], 6);
        let liar = vector(&[(4, 7.0), (5, 2.0)], 6);
        let received = [(1, &honest), (2, &honest), (3, &honest), (4, &liar)];
        let (branch, _) = storage_update(&mut s, 0, &received, 4, PARAMS, 3);
        assert_eq!(branch, UpdateBranch::Threshold);
        assert_eq!(s.get(5).unwrap()[0], 1.0);
        assert!(s.get(4).is_none());
    }

    #[test]
    fn majority_branch_needs_strict_majority() {
        let mut s = StorageVector::new(4);
        let a = vector(&[(3, 1.0)], 4);
        let b = vector(&[(3, 2.0)], 4);
        let (branch, changed) = storage_update(&mut s, 0, &[(1, &a), (2, &b)], 3, PARAMS, 5);
        assert_eq!((branch, changed), (UpdateBranch::Majority, 0));
        let (_, changed) = storage_update(&mut s, 0, &[(1, &a), (2, &a)], 3, PARAMS, 6);
        assert_eq!(changed, 1);
    }

    #[test]
    fn nothing_received_changes_nothing() {
        let mut s = vector(&[(1, 3.0)], 3);
        let before = s.clone();
        assert_eq!(storage_update(&mut s, 0, &[], 2, PARAMS, 4).1, 0);
        assert_eq!(s, before);
    }

    #[test]
    fn filled_slots_are_never_replaced() {
        let mut s = vector(&[(0, 1.0), (2, 4.0)], 3);
        let other = vector(&[(0, 8.0), (2, 8.0)], 3);
        storage_update(&mut s, 0, &[(1, &other), (2, &other)], 2, PARAMS, 3);
        assert_eq!(s.get(0).unwrap()[0], 1.0);
        assert_eq!(s.get(2).unwrap()[0], 4.0);
    }

    #[test]
    fn detection_cases() {
        let accepted = vector(&[(0, 1.0), (1, 2.0), (2, 3.0)], 4);
        let honest = Arc::new(vector(&[(1, 2.0), (2, 3.0)], 4));
        let liar = Arc::new(vector(&[(1, 2.5)], 4));
        let history = vec![vec![(1, honest.clone())], vec![(1, honest), (2, liar)]];
        let d = detect_attackers(&history, &accepted, &[1, 2, 3]);
        assert_eq!(d.dos, BTreeSet::from([3]));
        assert_eq!(d.deceivers, BTreeSet::from([2]));
        let clean = detect_attackers(&[], &accepted, &[]);
        assert_eq!(clean, Detection::default());
    }

    #[test]
    fn equality_is_bitwise() {
        assert!(same_value(&[0.1 + 0.2], &[0.1 + 0.2]));
        assert!(!same_value(&[0.1 + 0.2], &[0.3]));
        assert!(!same_value(&[0.0], &[-0.0]));
    }
}
