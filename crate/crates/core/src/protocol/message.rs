use std::sync::Arc;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use super::correction::CorrectionTable;
use super::storage::StorageVector;
use crate::digraph::NodeId;
use crate::paillier::Ciphertext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    SubState,
    Weight,
    Storage,
    Correction,
}

/// A privacy weight on the wire: encrypted for the recipient, or in the
/// clear when encryption is switched off for ablation runs.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightPayload {
    Encrypted(Ciphertext),
    Plain(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    SubState(Arc<Vec<f64>>),
    Weight(WeightPayload),
    Storage(Arc<StorageVector>),
    Correction(Arc<CorrectionTable>),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::SubState(_) => MessageKind::SubState,
            Payload::Weight(_) => MessageKind::Weight,
            Payload::Storage(_) => MessageKind::Storage,
            Payload::Correction(_) => MessageKind::Correction,
        }
    }
}

/// A message sent in `round`, delivered at `round + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub round: usize,
    pub from: usize,
    pub to: usize,
    pub payload: Payload,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }
}

impl Serialize for Message {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Message", 5)?;
        s.serialize_field("round", &self.round)?;
        s.serialize_field("from", &NodeId(self.from))?;
        s.serialize_field("to", &NodeId(self.to))?;
        s.serialize_field("kind", &self.kind())?;
        match &self.payload {
            Payload::SubState(v) => s.serialize_field("payload", &**v)?,
            Payload::Weight(WeightPayload::Encrypted(c)) => s.serialize_field("payload", c)?,
            Payload::Weight(WeightPayload::Plain(w)) => s.serialize_field("payload", w)?,
            Payload::Storage(v) => s.serialize_field("payload", &**v)?,
            Payload::Correction(t) => s.serialize_field("payload", &**t)?,
        }
        s.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format() {
        let m = Message {
            round: 0,
            from: 2,
            to: 0,
            payload: Payload::SubState(Arc::new(vec![0.5, -1.0])),
        };
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"round":0,"from":3,"to":1,"kind":"substate","payload":[0.5,-1.0]}"#
        );
        let mut sv = StorageVector::new(2);
        sv.fill(1, Arc::new(vec![2.0]));
        let m = Message {
            round: 4,
            from: 1,
            to: 0,
            payload: Payload::Storage(Arc::new(sv)),
        };
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"round":4,"from":2,"to":1,"kind":"storage","payload":[null,[2.0]]}"#
        );
    }
}
