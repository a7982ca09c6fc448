use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::EvidenceError;

/// Widest frame supported: subsets are addressed by a `u16`-sized bitmask.
pub const MAX_EVENTS: usize = 16;

/// A finite, ordered set of mutually exclusive events.
///
/// Subsets of the frame are addressed by bitmask: bit `k` set means event `k`
/// belongs to the subset, and mask `0` is the empty set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FrameOfDiscernment {
    labels: Vec<String>,
}

impl FrameOfDiscernment {
    pub fn new<I, S>(labels: I) -> Result<Self, EvidenceError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 || labels.len() > MAX_EVENTS {
            return Err(EvidenceError::FrameSize(labels.len()));
        }
        for (i, label) in labels.iter().enumerate() {
            if label.is_empty() || label.contains('|') {
                return Err(EvidenceError::InvalidLabel(label.clone()));
            }
            if labels[..i].contains(label) {
                return Err(EvidenceError::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self { labels })
    }

    /// Frame with labels `A1 … An`.
    pub fn numbered(n: usize) -> Result<Self, EvidenceError> {
        Self::new((1..=n).map(|i| format!("A{i}")))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Number of subsets, including the empty set: `2^n`.
    #[inline]
    pub fn subset_count(&self) -> usize {
        1 << self.labels.len()
    }

    /// Bitmask of the whole frame.
    #[inline]
    pub fn full_mask(&self) -> usize {
        self.subset_count() - 1
    }

    /// `|`-joined labels of a subset, in frame order. The empty set renders as `∅`.
    pub fn subset_name(&self, mask: usize) -> String {
        if mask == 0 {
            return EMPTY_SET_NAME.to_string();
        }
        self.labels
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, l)| l.as_str())
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Inverse of [`subset_name`](Self::subset_name); label order in the input is irrelevant.
    pub fn parse_subset(&self, name: &str) -> Result<usize, EvidenceError> {
        if name == EMPTY_SET_NAME {
            return Ok(0);
        }
        let mut mask = 0usize;
        for label in name.split('|') {
            let k = self
                .index_of(label)
                .ok_or_else(|| EvidenceError::UnknownLabel(label.to_string()))?;
            mask |= 1 << k;
        }
        Ok(mask)
    }
}

pub(crate) const EMPTY_SET_NAME: &str = "∅";

impl fmt::Display for FrameOfDiscernment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.labels.join(", "))
    }
}

impl Serialize for FrameOfDiscernment {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.labels.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FrameOfDiscernment {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let labels = Vec::<String>::deserialize(deserializer)?;
        Self::new(labels).map_err(serde::de::Error::custom)
    }
}
