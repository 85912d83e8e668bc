// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use serde::de::{self, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{ModelError, Result};
use crate::location::LocationRef;
use crate::timestamp::Timestamp;

/// Static description of a deployed sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorMetadataRecord {
    pub acp_id: String,
    #[serde(alias = "type")]
    pub acp_type: String,
    #[serde(default)]
    pub owner: String,
    #[serde(default)]
    pub source: String,
    #[serde(deserialize_with = "feature_list")]
    pub features: Vec<String>,
    pub acp_location: LocationRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acp_ts: Option<Timestamp>,
}

impl SensorMetadataRecord {
    pub fn parent_crate_id(&self) -> Option<&str> {
        self.acp_location.parent_crate_id.as_deref()
    }

    pub fn validate(&self) -> Result<()> {
        if self.acp_id.is_empty() {
            return Err(ModelError::InvalidArgument("empty acp_id".into()));
        }
        if self.features.is_empty() {
            return Err(ModelError::InvalidArgument(format!("{}: empty feature list", self.acp_id)));
        }
        self.acp_location.validate()
    }
}

/// True for `<vendor>-<model>-<6 lowercase hex>` identifiers.
pub fn is_generated_id(acp_id: &str) -> bool {
    let parts: Vec<&str> = acp_id.split('-').collect();
    parts.len() == 3
        && !parts[0].is_empty()
        && !parts[1].is_empty()
        && parts[2].len() == 6
        && parts[2].bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

// Accepts either a JSON list or a comma-separated string.
fn feature_list<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<String>, D::Error> {
    struct FeatureVisitor;

    impl<'de> Visitor<'de> for FeatureVisitor {
        type Value = Vec<String>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a list of feature names or a comma-separated string")
        }

        fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Vec<String>, E> {
            Ok(v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect())
        }

        fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Vec<String>, A::Error> {
            let mut out = Vec::new();
            while let Some(name) = seq.next_element::<String>()? {
                out.push(name);
            }
            Ok(out)
        }
    }

    d.deserialize_any(FeatureVisitor)
}
