// SPDX-License-Identifier: Apache-2.0

//! Location references and boundary polygons.
//!
//! A location is either global (`"system": "GPS"`) or expressed in a
//! building's own coordinate system (`"system": "<building>"`, with
//! `x`, `y`, floor `f` and in-floor height `zf`). Either form may name a
//! parent crate, which places the subject in the crate hierarchy.

use serde::{Deserialize, Serialize, Serializer};
use serde::ser::SerializeMap;

use crate::error::{ModelError, Result};

pub const GPS_SYSTEM: &str = "GPS";

#[derive(Debug, Clone, PartialEq)]
pub enum Position {
    Gps { lat: f64, lng: f64, alt: f64 },
    Building { system: String, x: f64, y: f64, f: i64, zf: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationRef {
    pub position: Position,
    pub parent_crate_id: Option<String>,
}

impl LocationRef {
    pub fn gps(lat: f64, lng: f64, alt: f64) -> Result<Self> {
        let loc = LocationRef {
            position: Position::Gps { lat, lng, alt },
            parent_crate_id: None,
        };
        loc.validate()?;
        Ok(loc)
    }

    pub fn building(system: impl Into<String>, x: f64, y: f64, f: i64, zf: f64) -> Result<Self> {
        let loc = LocationRef {
            position: Position::Building { system: system.into(), x, y, f, zf },
            parent_crate_id: None,
        };
        loc.validate()?;
        Ok(loc)
    }

    pub fn with_parent(mut self, parent: impl Into<String>) -> Self {
        self.parent_crate_id = Some(parent.into());
        self
    }

    pub fn system(&self) -> &str {
        match &self.position {
            Position::Gps { .. } => GPS_SYSTEM,
            Position::Building { system, .. } => system,
        }
    }

    /// Floor index for in-building locations.
    pub fn floor(&self) -> Option<i64> {
        match self.position {
            Position::Building { f, .. } => Some(f),
            Position::Gps { .. } => None,
        }
    }

    /// In-building `(x, y)` offset.
    pub fn xy(&self) -> Option<(f64, f64)> {
        match self.position {
            Position::Building { x, y, .. } => Some((x, y)),
            Position::Gps { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.position {
            Position::Gps { lat, lng, alt } => {
                if !(lat.is_finite() && (-90.0..=90.0).contains(lat)) {
                    return Err(ModelError::InvalidLocation(format!("acp_lat {lat} outside [-90, 90]")));
                }
                if !(lng.is_finite() && (-180.0..=180.0).contains(lng)) {
                    return Err(ModelError::InvalidLocation(format!("acp_lng {lng} outside [-180, 180]")));
                }
                if !alt.is_finite() {
                    return Err(ModelError::InvalidLocation("acp_alt is not finite".into()));
                }
            }
            Position::Building { system, x, y, zf, .. } => {
                if system.is_empty() || system == GPS_SYSTEM {
                    return Err(ModelError::InvalidLocation(format!("bad building system {system:?}")));
                }
                if !(x.is_finite() && y.is_finite() && zf.is_finite()) {
                    return Err(ModelError::InvalidLocation("non-finite coordinate".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLocation {
    system: String,
    acp_lat: Option<f64>,
    acp_lng: Option<f64>,
    acp_alt: Option<f64>,
    x: Option<f64>,
    y: Option<f64>,
    f: Option<f64>,
    zf: Option<f64>,
    z: Option<f64>,
    parent_crate_id: Option<String>,
}

impl TryFrom<RawLocation> for LocationRef {
    type Error = ModelError;

    fn try_from(raw: RawLocation) -> Result<Self> {
        let position = if raw.system == GPS_SYSTEM {
            if raw.x.is_some() || raw.y.is_some() || raw.f.is_some() || raw.zf.is_some() || raw.z.is_some() {
                return Err(ModelError::InvalidLocation(
                    "GPS location must not carry in-building coordinates".into(),
                ));
            }
            let (Some(lat), Some(lng)) = (raw.acp_lat, raw.acp_lng) else {
                return Err(ModelError::InvalidLocation("GPS location needs acp_lat and acp_lng".into()));
            };
            Position::Gps { lat, lng, alt: raw.acp_alt.unwrap_or(0.0) }
        } else {
            if raw.acp_lat.is_some() || raw.acp_lng.is_some() || raw.acp_alt.is_some() {
                return Err(ModelError::InvalidLocation(format!(
                    "in-building location ({}) must not carry GPS fields",
                    raw.system
                )));
            }
            let (Some(x), Some(y), Some(f)) = (raw.x, raw.y, raw.f) else {
                return Err(ModelError::InvalidLocation("in-building location needs x, y and f".into()));
            };
            if f.fract() != 0.0 || !f.is_finite() {
                return Err(ModelError::InvalidLocation(format!("floor index {f} is not an integer")));
            }
            if raw.zf.is_some() && raw.z.is_some() {
                return Err(ModelError::InvalidLocation("both zf and z given".into()));
            }
            Position::Building {
                system: raw.system,
                x,
                y,
                f: f as i64,
                zf: raw.zf.or(raw.z).unwrap_or(0.0),
            }
        };
        let loc = LocationRef { position, parent_crate_id: raw.parent_crate_id };
        loc.validate()?;
        Ok(loc)
    }
}

impl<'de> Deserialize<'de> for LocationRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawLocation::deserialize(d)?;
        LocationRef::try_from(raw).map_err(serde::de::Error::custom)
    }
}

impl Serialize for LocationRef {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(None)?;
        match &self.position {
            Position::Gps { lat, lng, alt } => {
                map.serialize_entry("system", GPS_SYSTEM)?;
                map.serialize_entry("acp_lat", lat)?;
                map.serialize_entry("acp_lng", lng)?;
                map.serialize_entry("acp_alt", &crate::json::Num(*alt))?;
            }
            Position::Building { system, x, y, f, zf } => {
                map.serialize_entry("system", system)?;
                map.serialize_entry("x", &crate::json::Num(*x))?;
                map.serialize_entry("y", &crate::json::Num(*y))?;
                map.serialize_entry("f", f)?;
                map.serialize_entry("zf", &crate::json::Num(*zf))?;
            }
        }
        if let Some(parent) = &self.parent_crate_id {
            map.serialize_entry("parent_crate_id", parent)?;
        }
        map.end()
    }
}

/// Closed polygon in a named coordinate system; the first point is not repeated.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPolygon {
    pub system: String,
    pub points: Vec<[f64; 2]>,
}

impl BoundaryPolygon {
    pub fn new(system: impl Into<String>, points: Vec<[f64; 2]>) -> Self {
        BoundaryPolygon { system: system.into(), points }
    }

    /// Signed shoelace area.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        if n < 3 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..n {
            let [x0, y0] = self.points[i];
            let [x1, y1] = self.points[(i + 1) % n];
            acc += x0 * y1 - x1 * y0;
        }
        acc / 2.0
    }

    /// Reason the polygon is degenerate, if it is.
    pub fn degeneracy(&self) -> Option<String> {
        if self.points.len() < 3 {
            return Some(format!("{} points, need at least 3", self.points.len()));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Some("non-finite coordinate".into());
        }
        if self.signed_area() == 0.0 {
            return Some("zero area".into());
        }
        None
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawBoundary {
    Object {
        #[serde(default)]
        system: String,
        boundary: Vec<[f64; 2]>,
    },
    Points(Vec<[f64; 2]>),
    // The bare array is sometimes shipped as a quoted JSON string.
    Text(String),
}

impl<'de> Deserialize<'de> for BoundaryPolygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match RawBoundary::deserialize(d)? {
            RawBoundary::Object { system, boundary } => Ok(BoundaryPolygon::new(system, boundary)),
            RawBoundary::Points(points) => Ok(BoundaryPolygon::new("", points)),
            RawBoundary::Text(text) => {
                let points: Vec<[f64; 2]> = serde_json::from_str(&text).map_err(serde::de::Error::custom)?;
                Ok(BoundaryPolygon::new("", points))
            }
        }
    }
}

impl Serialize for BoundaryPolygon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let points: Vec<[crate::json::Num; 2]> = self
            .points
            .iter()
            .map(|[x, y]| [crate::json::Num(*x), crate::json::Num(*y)])
            .collect();
        let mut map = s.serialize_map(Some(2))?;
        map.serialize_entry("system", &self.system)?;
        map.serialize_entry("boundary", &points)?;
        map.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn z_is_accepted_and_emitted_as_zf() {
        let loc: LocationRef =
            serde_json::from_value(json!({"f": 1, "x": 22.06, "y": 34.67, "z": 0, "system": "WGB"})).unwrap();
        assert_eq!(loc.floor(), Some(1));
        let out = serde_json::to_value(&loc).unwrap();
        assert_eq!(out, json!({"system": "WGB", "x": 22.06, "y": 34.67, "f": 1, "zf": 0}));
    }

    #[test]
    fn gps_with_parent() {
        let loc: LocationRef = serde_json::from_value(json!({
            "system": "GPS", "acp_alt": 10, "acp_lat": -27.116667,
            "acp_lng": -109.366667, "parent_crate_id": "FE11"
        }))
        .unwrap();
        assert_eq!(loc.parent_crate_id.as_deref(), Some("FE11"));
        assert_eq!(
            serde_json::to_value(&loc).unwrap(),
            json!({"system": "GPS", "acp_lat": -27.116667, "acp_lng": -109.366667, "acp_alt": 10, "parent_crate_id": "FE11"})
        );
    }

    #[test]
    fn rejects_mixed_and_out_of_range() {
        let mixed = json!({"system": "GPS", "acp_lat": 1.0, "acp_lng": 2.0, "x": 1.0});
        assert!(serde_json::from_value::<LocationRef>(mixed).is_err());
        let lat = json!({"system": "GPS", "acp_lat": 91.0, "acp_lng": 2.0});
        assert!(serde_json::from_value::<LocationRef>(lat).is_err());
        let frac_floor = json!({"system": "WGB", "x": 1.0, "y": 1.0, "f": 1.5});
        assert!(serde_json::from_value::<LocationRef>(frac_floor).is_err());
        let building_alt = json!({"system": "WGB", "x": 1.0, "y": 1.0, "f": 1, "acp_alt": 3.0});
        assert!(serde_json::from_value::<LocationRef>(building_alt).is_err());
    }

    #[test]
    fn boundary_forms() {
        let obj: BoundaryPolygon =
            serde_json::from_value(json!({"system": "WGB", "boundary": [[0,0],[0,78],[73,78],[73,0]]})).unwrap();
        let text: BoundaryPolygon = serde_json::from_value(json!("[[0,0],[0,78],[73,78],[73,0]]")).unwrap();
        assert_eq!(obj.points, text.points);
        assert_eq!(obj.signed_area().abs(), 73.0 * 78.0);
        assert!(obj.degeneracy().is_none());
        assert_eq!(
            serde_json::to_value(&obj).unwrap(),
            json!({"system": "WGB", "boundary": [[0,0],[0,78],[73,78],[73,0]]})
        );
    }

    #[test]
    fn degenerate_boundaries() {
        assert!(BoundaryPolygon::new("WGB", vec![[0.0, 0.0], [1.0, 1.0]]).degeneracy().is_some());
        assert!(BoundaryPolygon::new("WGB", vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).degeneracy().is_some());
        assert!(BoundaryPolygon::new("WGB", vec![[0.0, 0.0], [f64::NAN, 1.0], [2.0, 0.0]]).degeneracy().is_some());
    }
}
