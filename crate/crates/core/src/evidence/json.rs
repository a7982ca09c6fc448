//! `{"frame": ["A1", "A2"], "masses": {"A1": 0.6, "A1|A2": 0.4}}`
//!
//! Subsets are `|`-joined labels in frame order; zero masses are omitted.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{FrameOfDiscernment, MassFunction};
use crate::scalar::Scalar;

struct Masses<'a, T>(&'a MassFunction<T>);

impl<T: Scalar> Serialize for Masses<'_, T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let m = self.0;
        let focal: Vec<(usize, T)> = m.focal_elements().collect();
        let mut map = serializer.serialize_map(Some(focal.len()))?;
        for (mask, value) in focal {
            map.serialize_entry(&m.frame().subset_name(mask), &value.as_f64())?;
        }
        map.end()
    }
}

impl<T: Scalar> Serialize for MassFunction<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("frame", self.frame())?;
        map.serialize_entry("masses", &Masses(self))?;
        map.end()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMass {
    frame: FrameOfDiscernment,
    masses: BTreeMap<String, f64>,
}

impl<'de, T: Scalar> Deserialize<'de> for MassFunction<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawMass::deserialize(deserializer)?;
        let frame = Arc::new(raw.frame);
        let mut focal = Vec::with_capacity(raw.masses.len());
        for (name, value) in &raw.masses {
            let mask = frame.parse_subset(name).map_err(D::Error::custom)?;
            focal.push((mask, T::lit(*value)));
        }
        MassFunction::from_focal(frame, &focal).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn serializes_to_documented_shape() {
        let frame = Arc::new(FrameOfDiscernment::new(["A1", "A2"]).unwrap());
        let m = MassFunction::<f64>::from_named(frame, &[("A1", 0.6), ("A1|A2", 0.4)]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"frame":["A1","A2"],"masses":{"A1":0.6,"A1|A2":0.4}}"#);
    }

    #[test]
    fn rejects_invalid_documents() {
        let bad_sum = r#"{"frame":["a","b"],"masses":{"a":0.6}}"#;
        assert!(serde_json::from_str::<MassFunction<f64>>(bad_sum).is_err());
        let bad_label = r#"{"frame":["a","b"],"masses":{"c":1.0}}"#;
        assert!(serde_json::from_str::<MassFunction<f64>>(bad_label).is_err());
        let extra = r#"{"frame":["a","b"],"masses":{"a":1.0},"x":1}"#;
        assert!(serde_json::from_str::<MassFunction<f64>>(extra).is_err());
    }

    proptest! {
        #[test]
        fn json_round_trip_is_exact(raw in proptest::collection::vec(0.0f64..1.0, 8)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let mut masses: Vec<f64> = raw.iter().map(|v| v / total).collect();
            masses[0] = 0.0;
            let s: f64 = masses.iter().sum();
            for v in masses.iter_mut() { *v /= s; }
            let frame = Arc::new(FrameOfDiscernment::numbered(3).unwrap());
            let m = match MassFunction::<f64>::new(frame, masses) { Ok(m) => m, Err(_) => return Ok(()) };
            let back: MassFunction<f64> = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
