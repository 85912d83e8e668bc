// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{ModelError, Result};
use crate::json::Num;
use crate::location::LocationRef;
use crate::timestamp::Timestamp;

/// The `features` object of a reading.
///
/// Numeric entries are measurements. Anything else (e.g. a `device`
/// string) is carried through as an attribute so the document survives a
/// round trip unchanged, but it is not a feature.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Features {
    pub values: BTreeMap<String, f64>,
    pub attributes: BTreeMap<String, Value>,
}

impl Features {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }
}

impl<const N: usize> From<[(&str, f64); N]> for Features {
    fn from(items: [(&str, f64); N]) -> Self {
        Features {
            values: items.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            attributes: BTreeMap::new(),
        }
    }
}

impl Serialize for Features {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.values.len() + self.attributes.len()))?;
        let mut values = self.values.iter().peekable();
        let mut attrs = self.attributes.iter().peekable();
        // Merge in key order so the document reads like the sensor sent it.
        loop {
            match (values.peek(), attrs.peek()) {
                (Some((vk, _)), Some((ak, _))) if ak < vk => {
                    let (k, v) = attrs.next().unwrap();
                    map.serialize_entry(k, v)?;
                }
                (Some(_), _) => {
                    let (k, v) = values.next().unwrap();
                    map.serialize_entry(k, &Num(*v))?;
                }
                (None, Some(_)) => {
                    let (k, v) = attrs.next().unwrap();
                    map.serialize_entry(k, v)?;
                }
                (None, None) => break,
            }
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Features {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = BTreeMap::<String, Value>::deserialize(d)?;
        let mut out = Features::default();
        for (k, v) in raw {
            match v.as_f64() {
                Some(n) => {
                    out.values.insert(k, n);
                }
                None => {
                    out.attributes.insert(k, v);
                }
            }
        }
        Ok(out)
    }
}

/// One timestamped sample from one sensor, optionally enriched with the
/// sensor's type and placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorReading {
    pub acp_id: String,
    pub acp_ts: Timestamp,
    pub features: Features,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acp_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acp_location: Option<LocationRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_crate_id: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unregistered: bool,
}

impl SensorReading {
    pub fn new(acp_id: impl Into<String>, acp_ts: Timestamp, features: Features) -> Self {
        SensorReading {
            acp_id: acp_id.into(),
            acp_ts,
            features,
            acp_type: None,
            acp_location: None,
            parent_crate_id: None,
            unregistered: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.acp_id.is_empty() {
            return Err(ModelError::InvalidReading("empty acp_id".into()));
        }
        if self.features.is_empty() {
            return Err(ModelError::InvalidReading("empty features".into()));
        }
        Ok(())
    }

    pub fn is_enriched(&self) -> bool {
        self.acp_type.is_some() || self.unregistered
    }
}
