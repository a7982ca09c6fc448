use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use super::state::axpy;
use super::storage::{same_value, StorageVector};
use super::ProtocolError;
use crate::digraph::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Dos,
    Deception,
}

/// What a node exchanged before reconstruction: `(sub-state, decoded weight)`
/// per neighbor. Kept for the whole run so corrections can be computed later.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalRecords {
    pub sent: BTreeMap<usize, (Vec<f64>, f64)>,
    pub received: BTreeMap<usize, (Vec<f64>, f64)>,
}

/// Correction `owner` contributes for one attacker neighbor: the weighted
/// share it handed to the attacker (compensation) minus the weighted share it
/// took from a deceiver (deletion).
pub fn correction_entry(records: &LocalRecords, attacker: usize, kind: AttackKind, dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    if let Some((share, w)) = records.sent.get(&attacker) {
        axpy(&mut m, *w, share);
    }
    if kind == AttackKind::Deception {
        if let Some((share, w)) = records.received.get(&attacker) {
            axpy(&mut m, -w, share);
        }
    }
    m
}

/// Total correction `M_j` of a node over its identified attacker neighbors.
pub fn compute_correction(
    records: Option<&LocalRecords>,
    deceivers: &BTreeSet<usize>,
    dos: &BTreeSet<usize>,
    dim: usize,
) -> Result<Vec<f64>, ProtocolError> {
    let records = records.ok_or(ProtocolError::MissingLocalRecord)?;
    let mut m = vec![0.0; dim];
    let tagged = dos
        .iter()
        .map(|&k| (k, AttackKind::Dos))
        .chain(deceivers.iter().map(|&k| (k, AttackKind::Deception)));
    for (k, kind) in tagged {
        axpy(&mut m, 1.0, &correction_entry(records, k, kind, dim));
    }
    Ok(m)
}

/// One `(owner, attacker)` cell of the correction vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionEntry {
    pub kind: AttackKind,
    pub amount: Arc<Vec<f64>>,
}

impl CorrectionEntry {
    pub fn same_as(&self, other: &Self) -> bool {
        self.kind == other.kind && same_value(&self.amount, &other.amount)
    }
}

/// The replicated correction vector, keyed by `(owner, attacker)` so every
/// correction is counted once however many relays carry it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrectionTable {
    entries: BTreeMap<(usize, usize), CorrectionEntry>,
}

/// Per-owner view of a correction table.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionRecord {
    pub owner: usize,
    pub deceivers: BTreeSet<usize>,
    pub dos: BTreeSet<usize>,
    pub amount: Vec<f64>,
}

impl Serialize for CorrectionRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let ids = |set: &BTreeSet<usize>| set.iter().map(|&k| NodeId(k)).collect::<Vec<_>>();
        let mut s = serializer.serialize_struct("CorrectionRecord", 4)?;
        s.serialize_field("owner", &NodeId(self.owner))?;
        s.serialize_field("deceivers", &ids(&self.deceivers))?;
        s.serialize_field("dos", &ids(&self.dos))?;
        s.serialize_field("amount", &self.amount)?;
        s.end()
    }
}

impl CorrectionTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, owner: usize, attacker: usize) -> Option<&CorrectionEntry> {
        self.entries.get(&(owner, attacker))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &CorrectionEntry)> {
        self.entries.iter()
    }

    /// Write-once insert. Returns whether the entry was new.
    pub fn insert(&mut self, owner: usize, attacker: usize, entry: CorrectionEntry) -> bool {
        if self.entries.contains_key(&(owner, attacker)) {
            return false;
        }
        self.entries.insert((owner, attacker), entry);
        true
    }

    /// Every attacker named in the table, with its kind.
    pub fn attackers(&self) -> BTreeMap<usize, AttackKind> {
        self.entries.iter().map(|(&(_, k), e)| (k, e.kind)).collect()
    }

    /// Sum of the corrections owned by nodes in `owners`.
    pub fn correction_sum(&self, owners: &BTreeSet<usize>, dim: usize) -> Vec<f64> {
        let mut m = vec![0.0; dim];
        for (&(owner, _), e) in &self.entries {
            if owners.contains(&owner) {
                axpy(&mut m, 1.0, &e.amount);
            }
        }
        m
    }

    pub fn records(&self, dim: usize) -> Vec<CorrectionRecord> {
        let mut out: BTreeMap<usize, CorrectionRecord> = BTreeMap::new();
        for (&(owner, k), e) in &self.entries {
            let r = out.entry(owner).or_insert_with(|| CorrectionRecord {
                owner,
                deceivers: BTreeSet::new(),
                dos: BTreeSet::new(),
                amount: vec![0.0; dim],
            });
            match e.kind {
                AttackKind::Dos => r.dos.insert(k),
                AttackKind::Deception => r.deceivers.insert(k),
            };
            axpy(&mut r.amount, 1.0, &e.amount);
        }
        out.into_values().collect()
    }
}

impl Serialize for CorrectionTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Cell<'a> {
            owner: NodeId,
            attacker: NodeId,
            kind: AttackKind,
            amount: &'a [f64],
        }
        let cells: Vec<Cell> = self
            .entries
            .iter()
            .map(|(&(o, k), e)| Cell {
                owner: NodeId(o),
                attacker: NodeId(k),
                kind: e.kind,
                amount: &e.amount,
            })
            .collect();
        cells.serialize(serializer)
    }
}

/// Damped update towards the corrected mean of the known-normal slots:
/// `x ← ε x + (1 − ε) (Σ_{j ∈ normal} S_j + M) / |normal|`.
///
/// Returns `Ok(None)` while some normal slot is still empty.
pub fn consensus_update(
    x_prev: &[f64],
    storage: &StorageVector,
    normal: &BTreeSet<usize>,
    correction: &[f64],
    epsilon: f64,
) -> Result<Option<Vec<f64>>, ProtocolError> {
    if normal.is_empty() {
        return Err(ProtocolError::EmptyNormalSet);
    }
    let mut total = correction.to_vec();
    for &j in normal {
        match storage.get(j) {
            Some(v) => axpy(&mut total, 1.0, v),
            None => return Ok(None),
        }
    }
    let scale = (1.0 - epsilon) / normal.len() as f64;
    Ok(Some(
        x_prev
            .iter()
            .zip(&total)
            .map(|(x, t)| epsilon * x + scale * t)
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records() -> LocalRecords {
        LocalRecords {
            sent: BTreeMap::from([(1, (vec![2.0, 4.0], 0.5)), (2, (vec![1.0, 1.0], 0.25))]),
            received: BTreeMap::from([(1, (vec![8.0, 0.0], 0.5))]),
        }
    }

    #[test]
    fn correction_cases() {
        let r = records();
        let none = BTreeSet::new();
        assert_eq!(compute_correction(Some(&r), &none, &none, 2).unwrap(), vec![0.0, 0.0]);
        let dos = BTreeSet::from([2]);
        assert_eq!(compute_correction(Some(&r), &none, &dos, 2).unwrap(), vec![0.25, 0.25]);
        let dec = BTreeSet::from([1]);
        assert_eq!(
            compute_correction(Some(&r), &dec, &none, 2).unwrap(),
            vec![1.0 - 4.0, 2.0]
        );
        assert_eq!(
            compute_correction(None, &none, &none, 2),
            Err(ProtocolError::MissingLocalRecord)
        );
    }

    #[test]
    fn table_is_write_once_and_aggregates() {
        let mut t = CorrectionTable::default();
        let e = |v: f64, kind| CorrectionEntry {
            kind,
            amount: Arc::new(vec![v]),
        };
        assert!(t.insert(0, 5, e(1.0, AttackKind::Dos)));
        assert!(!t.insert(0, 5, e(9.0, AttackKind::Dos)));
        assert!(t.insert(0, 6, e(2.0, AttackKind::Deception)));
        assert!(t.insert(1, 5, e(4.0, AttackKind::Dos)));
        assert_eq!(t.correction_sum(&BTreeSet::from([0]), 1), vec![3.0]);
        assert_eq!(t.correction_sum(&BTreeSet::from([0, 1]), 1), vec![7.0]);
        let recs = t.records(1);
        assert_eq!(recs[0].dos, BTreeSet::from([5]));
        assert_eq!(recs[0].deceivers, BTreeSet::from([6]));
        assert_eq!(recs[0].amount, vec![3.0]);
        assert_eq!(t.attackers().len(), 2);
    }

    #[test]
    fn update_rule() {
        let mut s = StorageVector::new(3);
        s.fill(0, Arc::new(vec![1.0]));
        s.fill(1, Arc::new(vec![3.0]));
        let normal = BTreeSet::from([0, 1]);
        // epsilon = 0 jumps straight to the target.
        assert_eq!(
            consensus_update(&[9.0], &s, &normal, &[0.0], 0.0).unwrap(),
            Some(vec![2.0])
        );
        let x = consensus_update(&[10.0], &s, &normal, &[0.0], 0.5).unwrap().unwrap();
        assert_eq!(x, vec![6.0]);
        let all = BTreeSet::from([0, 1, 2]);
        assert_eq!(consensus_update(&[0.0], &s, &all, &[0.0], 0.5).unwrap(), None);
        assert_eq!(
            consensus_update(&[0.0], &s, &BTreeSet::new(), &[0.0], 0.5),
            Err(ProtocolError::EmptyNormalSet)
        );
    }
}
