// SPDX-License-Identifier: Apache-2.0

//! Building hierarchy records ("crates") and their admissibility checks.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::location::{BoundaryPolygon, LocationRef};
use crate::timestamp::Timestamp;

/// Parent chains longer than this are rejected.
pub const MAX_HIERARCHY_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CrateType {
    Site,
    Building,
    Floor,
    Room,
    Other(String),
}

impl CrateType {
    pub fn as_str(&self) -> &str {
        match self {
            CrateType::Site => "site",
            CrateType::Building => "building",
            CrateType::Floor => "floor",
            CrateType::Room => "room",
            CrateType::Other(s) => s,
        }
    }
}

impl From<&str> for CrateType {
    fn from(s: &str) -> Self {
        match s {
            "site" => CrateType::Site,
            "building" => CrateType::Building,
            "floor" => CrateType::Floor,
            "room" => CrateType::Room,
            other => CrateType::Other(other.to_string()),
        }
    }
}

impl fmt::Display for CrateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for CrateType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CrateType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(CrateType::from(s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrateRecord {
    pub crate_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_crate_id: Option<String>,
    pub crate_type: CrateType,
    #[serde(rename = "long-name", alias = "long_name", default)]
    pub long_name: String,
    #[serde(default)]
    pub description: String,
    pub acp_location: LocationRef,
    pub acp_boundary: BoundaryPolygon,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acp_ts: Option<Timestamp>,
}

impl CrateRecord {
    /// Fills a boundary that arrived without a coordinate-system name
    /// from the crate's own location system.
    pub fn normalize(&mut self) {
        if self.acp_boundary.system.is_empty() {
            self.acp_boundary.system = self.acp_location.system().to_string();
        }
    }

    pub fn is_root(&self) -> bool {
        self.parent_crate_id.is_none()
    }
}

/// Read access to the parent links of stored crates.
pub trait CrateLookup {
    /// `None` if the crate is unknown, `Some(parent)` otherwise.
    fn parent_of(&self, crate_id: &str) -> Option<Option<String>>;
}

impl CrateLookup for HashMap<String, CrateRecord> {
    fn parent_of(&self, crate_id: &str) -> Option<Option<String>> {
        self.get(crate_id).map(|c| c.parent_crate_id.clone())
    }
}

impl CrateLookup for BTreeMap<String, CrateRecord> {
    fn parent_of(&self, crate_id: &str) -> Option<Option<String>> {
        self.get(crate_id).map(|c| c.parent_crate_id.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyId,
    UnknownParent(String),
    Cycle,
    TooDeep,
    DegenerateBoundary(String),
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::EmptyId => "empty id",
            Violation::UnknownParent(_) => "unknown parent",
            Violation::Cycle => "cycle",
            Violation::TooDeep => "too deep",
            Violation::DegenerateBoundary(_) => "degenerate boundary",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownParent(p) => write!(f, "unknown parent: {p}"),
            Violation::DegenerateBoundary(why) => write!(f, "degenerate boundary: {why}"),
            other => f.write_str(other.code()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code() == code)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks `record` against the hierarchy in `store` as if it were upserted.
pub fn validate_crate(record: &CrateRecord, store: &dyn CrateLookup) -> ValidationReport {
    let mut violations = Vec::new();
    if record.crate_id.is_empty() {
        violations.push(Violation::EmptyId);
    }
    if let Some(why) = record.acp_boundary.degeneracy() {
        violations.push(Violation::DegenerateBoundary(why));
    }

    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(record.crate_id.clone());
    let mut current = record.parent_crate_id.clone();
    let mut hops = 0usize;
    while let Some(id) = current {
        hops += 1;
        if seen.contains(&id) {
            violations.push(Violation::Cycle);
            break;
        }
        if hops > MAX_HIERARCHY_DEPTH {
            violations.push(Violation::TooDeep);
            break;
        }
        match store.parent_of(&id) {
            None => {
                violations.push(Violation::UnknownParent(id));
                break;
            }
            Some(next) => {
                seen.insert(id);
                current = next;
            }
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room(id: &str, parent: Option<&str>) -> CrateRecord {
        CrateRecord {
            crate_id: id.into(),
            parent_crate_id: parent.map(Into::into),
            crate_type: CrateType::Room,
            long_name: String::new(),
            description: String::new(),
            acp_location: LocationRef::building("WGB", 22.06, 34.67, 1, 0.0).unwrap(),
            acp_boundary: BoundaryPolygon::new(
                "WGB",
                vec![[0.0, 0.0], [0.0, 78.0], [73.0, 78.0], [73.0, 0.0]],
            ),
            acp_ts: None,
        }
    }

    fn store(records: &[CrateRecord]) -> HashMap<String, CrateRecord> {
        records.iter().map(|r| (r.crate_id.clone(), r.clone())).collect()
    }

    #[test]
    fn fe11_under_ff_is_admissible() {
        let s = store(&[room("WGB", None), room("FF", Some("WGB"))]);
        assert!(validate_crate(&room("FE11", Some("FF")), &s).is_admissible());
    }

    #[test]
    fn self_parent_is_a_cycle() {
        let s = store(&[]);
        let report = validate_crate(&room("A", Some("A")), &s);
        assert!(report.has("cycle"), "{report}");
    }

    #[test]
    fn reparenting_into_own_subtree_is_a_cycle() {
        let s = store(&[room("A", None), room("B", Some("A")), room("C", Some("B"))]);
        assert!(validate_crate(&room("A", Some("C")), &s).has("cycle"));
    }

    #[test]
    fn unknown_parent_and_degenerate_boundary() {
        let mut r = room("X", Some("NOPE"));
        r.acp_boundary.points.truncate(2);
        let report = validate_crate(&r, &store(&[]));
        assert!(report.has("unknown parent"));
        assert!(report.has("degenerate boundary"));
    }

    #[test]
    fn depth_limit() {
        let mut chain = vec![room("c0", None)];
        for i in 1..=MAX_HIERARCHY_DEPTH {
            chain.push(room(&format!("c{i}"), Some(&format!("c{}", i - 1))));
        }
        let s = store(&chain);
        let ok = room("leaf", Some(&format!("c{}", MAX_HIERARCHY_DEPTH - 1)));
        assert!(validate_crate(&ok, &s).is_admissible());
        let deep = room("leaf", Some(&format!("c{MAX_HIERARCHY_DEPTH}")));
        assert!(validate_crate(&deep, &s).has("too deep"));
    }

    #[test]
    fn reference_field_names_parse() {
        let doc = serde_json::json!({
            "crate_id": "FE11",
            "crate_type": "room",
            "acp_ts": "1589469825.165538",
            "long-name": "Computer Science Department",
            "description": "Crate Description",
            "acp_boundary": "[[0,0],[0,78],[73,78],[73,0]]",
            "parent_crate_id": "FF",
            "acp_location": {"f": 1, "x": 22.06, "y": 34.67, "z": 0, "system": "WGB"}
        });
        let mut rec: CrateRecord = serde_json::from_value(doc).unwrap();
        rec.normalize();
        assert_eq!(rec.acp_boundary.system, "WGB");
        assert_eq!(rec.crate_type, CrateType::Room);
        let back = serde_json::to_value(&rec).unwrap();
        assert_eq!(back["long-name"], "Computer Science Department");
        assert_eq!(back["acp_location"]["zf"], 0);
        assert!(back["acp_location"].get("z").is_none());
    }
}
