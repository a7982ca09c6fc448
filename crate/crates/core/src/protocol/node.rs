use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use log::{debug, warn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::correction::{
    consensus_update, correction_entry, AttackKind, CorrectionEntry, CorrectionTable, LocalRecords,
};
use super::message::{Message, Payload, WeightPayload};
use super::state::{
    decompose_state, kept_share, max_abs, max_abs_diff, reconstruct_state, share_range, state_len, Decomposition,
};
use super::storage::{detect_attackers, storage_update, Detection, StorageParams, StorageVector, ThresholdRule};
use crate::adversary::DeceptionScript;
use crate::paillier::{decode_weight, encode_weight, PaillierKeypair, PublicKey};

/// Parameters shared by every node of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub n_nodes: usize,
    pub n_events: usize,
    pub f: f64,
    pub threshold: ThresholdRule,
    /// Rounds without change that count as stable.
    pub stability_rounds: usize,
    /// Relative tolerance for "x did not change".
    pub stability_tol: f64,
    pub encrypt_weights: bool,
}

impl ProtocolConfig {
    pub fn dim(&self) -> usize {
        state_len(self.n_events)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Decompose,
    Reconstruct,
    Disseminate,
    Correct,
    Converged,
}

#[derive(Debug, Clone)]
pub enum Role {
    Honest,
    Dos,
    Deceiver(Box<DeceptionScript>),
}

impl Role {
    pub fn attack_kind(&self) -> Option<AttackKind> {
        match self {
            Role::Honest => None,
            Role::Dos => Some(AttackKind::Dos),
            Role::Deceiver(_) => Some(AttackKind::Deception),
        }
    }
}

/// Public keys of every node, distributed before the run.
pub type KeyDirectory = Arc<Vec<PublicKey>>;

/// One node's protocol state machine. Call [`ProtocolNode::step`] once per
/// round with the messages sent to it in the previous round.
#[derive(Debug, Clone)]
pub struct ProtocolNode {
    id: usize,
    role: Role,
    in_nbrs: Vec<usize>,
    out_nbrs: Vec<usize>,
    cfg: Arc<ProtocolConfig>,
    keypair: PaillierKeypair,
    keys: KeyDirectory,
    rng: ChaCha8Rng,
    epsilon: f64,
    phase: Phase,
    x0: Vec<f64>,
    x: Vec<f64>,
    x1: Option<Vec<f64>>,
    own_share: Vec<f64>,
    records: Option<LocalRecords>,
    sent_so_far: LocalRecords,
    storage: StorageVector,
    history: Vec<Vec<(usize, Arc<StorageVector>)>>,
    storage_stable: usize,
    detection: Option<Detection>,
    corrections: CorrectionTable,
    correction_stable: usize,
    x_stable: usize,
    converged_round: Option<usize>,
}

impl ProtocolNode {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: usize,
        role: Role,
        in_nbrs: Vec<usize>,
        out_nbrs: Vec<usize>,
        x0: Vec<f64>,
        epsilon: f64,
        keypair: PaillierKeypair,
        keys: KeyDirectory,
        cfg: Arc<ProtocolConfig>,
        rng: ChaCha8Rng,
    ) -> Self {
        let n = cfg.n_nodes;
        Self {
            id,
            role,
            in_nbrs,
            out_nbrs,
            keypair,
            keys,
            rng,
            epsilon,
            phase: Phase::Init,
            x: x0.clone(),
            own_share: x0.clone(),
            x0,
            x1: None,
            records: None,
            sent_so_far: LocalRecords::default(),
            storage: StorageVector::new(n),
            history: Vec::new(),
            storage_stable: 0,
            detection: None,
            corrections: CorrectionTable::default(),
            correction_stable: 0,
            x_stable: 0,
            converged_round: None,
            cfg,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn role(&self) -> &Role {
        &self.role
    }

    pub fn is_attacker(&self) -> bool {
        !matches!(self.role, Role::Honest)
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x1(&self) -> Option<&[f64]> {
        self.x1.as_deref()
    }

    pub fn own_share(&self) -> &[f64] {
        &self.own_share
    }

    pub fn records(&self) -> Option<&LocalRecords> {
        self.records.as_ref()
    }

    pub fn storage(&self) -> &StorageVector {
        &self.storage
    }

    pub fn corrections(&self) -> &CorrectionTable {
        &self.corrections
    }

    pub fn converged_round(&self) -> Option<usize> {
        self.converged_round
    }

    pub fn in_neighbors(&self) -> &[usize] {
        &self.in_nbrs
    }

    pub fn out_neighbors(&self) -> &[usize] {
        &self.out_nbrs
    }

    /// Attackers this node knows of: its own detections plus every attacker
    /// named in its correction table.
    pub fn known_attackers(&self) -> BTreeMap<usize, AttackKind> {
        let mut known = self.corrections.attackers();
        if let Some(d) = &self.detection {
            known.extend(d.dos.iter().map(|&k| (k, AttackKind::Dos)));
            known.extend(d.deceivers.iter().map(|&k| (k, AttackKind::Deception)));
        }
        known
    }

    /// Attackers among the neighbors: direct detections over the
    /// in-neighbors, plus out-neighbors named in the correction table.
    pub fn identified(&self) -> Detection {
        let mut out = self.detection.clone().unwrap_or_default();
        for (k, kind) in self.corrections.attackers() {
            if self.out_nbrs.contains(&k) || self.in_nbrs.contains(&k) {
                match kind {
                    AttackKind::Dos => out.dos.insert(k),
                    AttackKind::Deception => out.deceivers.insert(k),
                };
            }
        }
        out
    }

    /// Nodes this node currently treats as normal.
    pub fn normal_set(&self) -> BTreeSet<usize> {
        let known = self.known_attackers();
        (0..self.cfg.n_nodes).filter(|k| !known.contains_key(k)).collect()
    }

    /// Factor that turns the converged state back into network sums.
    pub fn output_scale(&self) -> usize {
        match self.role {
            Role::Honest => self.normal_set().len(),
            Role::Dos => 1,
            Role::Deceiver(_) => self.storage.filled().max(1),
        }
    }

    pub fn step(&mut self, round: usize, inbox: &[Message]) -> Vec<Message> {
        if matches!(self.role, Role::Dos) {
            return crate::adversary::dos_behavior(round, inbox);
        }
        for m in inbox {
            if m.to != self.id || m.round + 1 != round || !self.in_nbrs.contains(&m.from) {
                warn!(
                    "node {}: dropping misaddressed or stale {:?} from {}",
                    self.id + 1,
                    m.kind(),
                    m.from + 1
                );
            }
        }
        let inbox: Vec<&Message> = inbox
            .iter()
            .filter(|m| m.to == self.id && m.round + 1 == round && self.in_nbrs.contains(&m.from))
            .collect();
        match round {
            0 => self.decompose(),
            1 => self.reconstruct(&inbox),
            _ => self.disseminate(round, &inbox),
        }
    }

    fn decompose(&mut self) -> Vec<Message> {
        let decomposition = match &self.role {
            Role::Deceiver(_) => self.identical_shares(),
            _ => decompose_state(&self.x0, &self.out_nbrs, &mut self.rng),
        };
        let Decomposition { own, shares } = decomposition;
        self.own_share = own;
        let mut out = Vec::with_capacity(2 * shares.len());
        let same_weight = self.rng.random::<f64>();
        for (j, share) in shares {
            let draw = if matches!(self.role, Role::Deceiver(_)) {
                same_weight
            } else {
                self.rng.random::<f64>()
            };
            let code = encode_weight(draw).expect("uniform draw lies in [0, 1]");
            let weight = decode_weight(code).expect("encoded weight in range");
            let share = Arc::new(share);
            out.push(self.message(0, j, Payload::SubState(share.clone())));
            let payload = if self.cfg.encrypt_weights {
                let ct = self.keys[j]
                    .encrypt_u64(code, &mut self.rng)
                    .expect("weights are far below any test modulus");
                WeightPayload::Encrypted(ct)
            } else {
                WeightPayload::Plain(code)
            };
            out.push(self.message(0, j, Payload::Weight(payload)));
            self.sent_so_far.sent.insert(j, ((*share).clone(), weight));
        }
        self.phase = Phase::Decompose;
        out
    }

    // Deceivers send one identical share to every out-neighbor.
    fn identical_shares(&mut self) -> Decomposition {
        let r = share_range(&self.x0);
        let share: Vec<f64> = self.x0.iter().map(|_| self.rng.random_range(-r..=r)).collect();
        let shares: BTreeMap<usize, Vec<f64>> = self.out_nbrs.iter().map(|&j| (j, share.clone())).collect();
        Decomposition {
            own: kept_share(&self.x0, shares.values()),
            shares,
        }
    }

    fn reconstruct(&mut self, inbox: &[&Message]) -> Vec<Message> {
        let mut shares = BTreeMap::new();
        let mut weights = BTreeMap::new();
        for m in inbox {
            match &m.payload {
                Payload::SubState(v) => {
                    shares.entry(m.from).or_insert_with(|| v.clone());
                }
                Payload::Weight(w) => {
                    let code = match w {
                        WeightPayload::Encrypted(c) => self.keypair.decrypt_u64(c),
                        WeightPayload::Plain(v) => Ok(*v),
                    };
                    match code
                        .map_err(|e| e.to_string())
                        .and_then(|c| decode_weight(c).map_err(|e| e.to_string()))
                    {
                        Ok(w) => {
                            weights.entry(m.from).or_insert(w);
                        }
                        Err(e) => warn!("node {}: unusable weight from {}: {e}", self.id + 1, m.from + 1),
                    }
                }
                other => warn!("node {}: unexpected {:?} in round 1", self.id + 1, other.kind()),
            }
        }
        let mut records = std::mem::take(&mut self.sent_so_far);
        for (j, share) in shares {
            match weights.get(&j) {
                Some(&w) => {
                    records.received.insert(j, ((*share).clone(), w));
                }
                None => warn!(
                    "node {}: sub-state from {} arrived without a weight",
                    self.id + 1,
                    j + 1
                ),
            }
        }
        let x1 = reconstruct_state(&self.own_share, &records.received, &records.sent);
        self.records = Some(records);
        self.x1 = Some(x1.clone());
        let own_value = match &mut self.role {
            Role::Deceiver(script) => script.tamper_state(&x1),
            _ => x1,
        };
        self.x = own_value.clone();
        self.storage.fill(self.id, Arc::new(own_value));
        self.phase = Phase::Reconstruct;
        if self.cfg.n_nodes == 1 && !self.is_attacker() {
            self.phase = Phase::Converged;
            self.detection = Some(Detection::default());
            self.converged_round = Some(1);
        }
        self.broadcast_storage(1)
    }

    fn disseminate(&mut self, round: usize, inbox: &[&Message]) -> Vec<Message> {
        if self.phase == Phase::Converged {
            let mut out = self.broadcast_storage(round);
            out.extend(self.broadcast_corrections(round));
            return out;
        }
        self.phase = self.phase.max(Phase::Disseminate);
        let mut received: Vec<(usize, Arc<StorageVector>)> = Vec::new();
        let mut tables: Vec<(usize, Arc<CorrectionTable>)> = Vec::new();
        for m in inbox {
            match &m.payload {
                Payload::Storage(s) if !received.iter().any(|(j, _)| *j == m.from) => {
                    received.push((m.from, s.clone()))
                }
                Payload::Correction(t) if !tables.iter().any(|(j, _)| *j == m.from) => tables.push((m.from, t.clone())),
                _ => warn!(
                    "node {}: dropping out-of-phase {:?} from {}",
                    self.id + 1,
                    m.kind(),
                    m.from + 1
                ),
            }
        }
        let params = StorageParams {
            f: self.cfg.f,
            rule: self.cfg.threshold,
        };
        let refs: Vec<(usize, &StorageVector)> = received.iter().map(|(j, s)| (*j, &**s)).collect();
        let (_, changed) = storage_update(&mut self.storage, self.id, &refs, self.in_nbrs.len(), params, round);
        if self.detection.is_none() {
            self.history.push(received);
        }
        if let Role::Deceiver(_) = self.role {
            self.deceiver_update();
            return self.broadcast_storage(round);
        }
        if self.phase == Phase::Disseminate {
            self.storage_stable = if changed == 0 { self.storage_stable + 1 } else { 0 };
            if self.storage_stable >= self.cfg.stability_rounds {
                let detection = detect_attackers(&self.history, &self.storage, &self.in_nbrs);
                debug!("node {} detection at round {round}: {detection:?}", self.id + 1);
                self.history.clear();
                self.detection = Some(detection);
                self.phase = Phase::Correct;
                self.add_own_corrections();
            }
        }
        if self.phase == Phase::Correct {
            let before = self.corrections.len();
            self.merge_corrections(&tables);
            self.add_own_corrections();
            let changed = self.corrections.len() != before;
            self.correction_stable = if changed { 0 } else { self.correction_stable + 1 };
        }
        self.update_state();
        if self.phase == Phase::Correct
            && self.correction_stable >= self.cfg.stability_rounds
            && self.x_stable >= self.cfg.stability_rounds
        {
            self.phase = Phase::Converged;
            self.converged_round = Some(round);
            debug!("node {} converged at round {round}", self.id + 1);
        }
        let mut out = self.broadcast_storage(round);
        out.extend(self.broadcast_corrections(round));
        out
    }

    fn update_state(&mut self) {
        let normal = self.normal_set();
        let correction = self.corrections.correction_sum(&normal, self.cfg.dim());
        let next = match consensus_update(&self.x, &self.storage, &normal, &correction, self.epsilon) {
            Ok(Some(next)) => next,
            Ok(None) | Err(_) => {
                self.x_stable = 0;
                return;
            }
        };
        let change = max_abs_diff(&next, &self.x);
        let settled = change <= self.cfg.stability_tol * (1.0 + max_abs(&next));
        self.x_stable = if settled { self.x_stable + 1 } else { 0 };
        self.x = next;
    }

    // Deceivers average whatever they hold, with no exclusion or correction.
    fn deceiver_update(&mut self) {
        let filled: Vec<&Arc<Vec<f64>>> = self.storage.slots().iter().flatten().collect();
        if filled.is_empty() {
            return;
        }
        let k = (1.0 - self.epsilon) / filled.len() as f64;
        let mut next: Vec<f64> = self.x.iter().map(|v| self.epsilon * v).collect();
        for v in filled {
            for (a, b) in next.iter_mut().zip(v.iter()) {
                *a += k * b;
            }
        }
        self.x = next;
    }

    /// Adds this node's own entries for every known attacker among its neighbors.
    fn add_own_corrections(&mut self) {
        let Some(records) = &self.records else { return };
        let dim = self.cfg.dim();
        for (k, kind) in self.known_attackers() {
            if !(self.in_nbrs.contains(&k) || self.out_nbrs.contains(&k)) || self.corrections.get(self.id, k).is_some()
            {
                continue;
            }
            let amount = Arc::new(correction_entry(records, k, kind, dim));
            self.corrections.insert(self.id, k, CorrectionEntry { kind, amount });
        }
    }

    /// Adopts correction entries from trusted in-neighbors: an owner's own
    /// entries directly, relayed entries once enough trusted senders agree.
    fn merge_corrections(&mut self, tables: &[(usize, Arc<CorrectionTable>)]) {
        let known = self.known_attackers();
        let trusted: Vec<&(usize, Arc<CorrectionTable>)> =
            tables.iter().filter(|(j, _)| !known.contains_key(j)).collect();
        let trusted_degree = self.in_nbrs.iter().filter(|j| !known.contains_key(j)).count();
        let needed = self.cfg.threshold.min_count(self.cfg.f, trusted_degree);
        let mut candidates: BTreeMap<(usize, usize), Vec<(usize, &CorrectionEntry)>> = BTreeMap::new();
        for (sender, table) in &trusted {
            for (&(owner, attacker), entry) in table.iter() {
                if owner == self.id || attacker == self.id || self.corrections.get(owner, attacker).is_some() {
                    continue;
                }
                candidates.entry((owner, attacker)).or_default().push((*sender, entry));
            }
        }
        for ((owner, attacker), claims) in candidates {
            if let Some((_, entry)) = claims.iter().find(|(s, _)| *s == owner) {
                self.corrections.insert(owner, attacker, (*entry).clone());
                continue;
            }
            let mut groups: Vec<(&CorrectionEntry, usize)> = Vec::new();
            for (_, e) in &claims {
                match groups.iter_mut().find(|(g, _)| g.same_as(e)) {
                    Some((_, c)) => *c += 1,
                    None => groups.push((e, 1)),
                }
            }
            groups.sort_by_key(|g| std::cmp::Reverse(g.1));
            let unique_top = groups.len() == 1 || groups[0].1 > groups[1].1;
            if groups[0].1 >= needed && unique_top {
                self.corrections.insert(owner, attacker, groups[0].0.clone());
            }
        }
    }

    fn message(&self, round: usize, to: usize, payload: Payload) -> Message {
        Message {
            round,
            from: self.id,
            to,
            payload,
        }
    }

    fn broadcast_storage(&mut self, round: usize) -> Vec<Message> {
        let payload = match &mut self.role {
            Role::Deceiver(script) => Arc::new(script.storage_payload(&self.storage, self.id)),
            _ => Arc::new(self.storage.clone()),
        };
        self.out_nbrs
            .iter()
            .map(|&j| self.message(round, j, Payload::Storage(payload.clone())))
            .collect()
    }

    fn broadcast_corrections(&self, round: usize) -> Vec<Message> {
        if self.phase < Phase::Correct || self.is_attacker() {
            return Vec::new();
        }
        let known = self.known_attackers();
        let table = Arc::new(self.corrections.clone());
        self.out_nbrs
            .iter()
            .filter(|j| !known.contains_key(j))
            .map(|&j| self.message(round, j, Payload::Correction(table.clone())))
            .collect()
    }
}
