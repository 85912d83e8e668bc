// SPDX-License-Identifier: Apache-2.0

//! Built-in reference dataset: the WGB building with two floors and room
//! FE11, the CO2 sensor deployed in FE11 and one of its readings.

use acp_model::{CrateRecord, SensorMetadataRecord, SensorReading};
use serde_json::json;

pub const SENSOR_ID: &str = "elsys-co2-041ba9";

pub fn crates() -> Vec<CrateRecord> {
    let docs = [
        json!({
            "crate_id": "WGB",
            "crate_type": "building",
            "long-name": "William Gates Building",
            "description": "Computer Laboratory building",
            "acp_ts": "1589469825.165538",
            "acp_location": {"system": "GPS", "acp_lat": -27.116667, "acp_lng": -109.366667, "acp_alt": 0.0},
            "acp_boundary": {"system": "WGB", "boundary": [[0, 0], [0, 56], [245, 56], [245, 0]]}
        }),
        json!({
            "crate_id": "GF",
            "parent_crate_id": "WGB",
            "crate_type": "floor",
            "long-name": "Ground Floor",
            "description": "Ground floor",
            "acp_ts": "1589469825.165538",
            "acp_location": {"system": "WGB", "x": 36.5, "y": 39, "f": 0, "zf": 0},
            "acp_boundary": {"system": "WGB", "boundary": [[0, 0], [0, 56], [245, 56], [245, 0]]}
        }),
        json!({
            "crate_id": "FF",
            "parent_crate_id": "WGB",
            "crate_type": "floor",
            "long-name": "First Floor",
            "description": "First floor",
            "acp_ts": "1589469825.165538",
            "acp_location": {"system": "WGB", "x": 36.5, "y": 39, "f": 1, "zf": 0},
            "acp_boundary": {"system": "WGB", "boundary": [[0, 0], [0, 56], [245, 56], [245, 0]]}
        }),
        json!({
            "crate_id": "FE11",
            "parent_crate_id": "FF",
            "crate_type": "room",
            "long-name": "Computer Science Department",
            "description": "Crate Description",
            "acp_ts": "1589469825.165538",
            "acp_location": {"system": "WGB", "x": 22.06, "y": 34.67, "f": 1, "zf": 0},
            "acp_boundary": {"system": "WGB", "boundary": [[0, 0], [0, 78], [73, 78], [73, 0]]}
        }),
    ];
    docs.into_iter()
        .map(|d| serde_json::from_value(d).expect("built-in crate"))
        .collect()
}

pub fn reference_sensor() -> SensorMetadataRecord {
    serde_json::from_value(json!({
        "acp_id": SENSOR_ID,
        "acp_ts": "1589469979.861816",
        "type": "co2",
        "owner": "ijl20",
        "source": "mqtt_ttn",
        "features": "co2, humidity, light, motion, temperature, vdd",
        "acp_location": {
            "system": "GPS",
            "acp_alt": 10,
            "acp_lat": -27.116667,
            "acp_lng": -109.366667,
            "parent_crate_id": "FE11"
        }
    }))
    .expect("built-in sensor")
}

/// The reading as a sensor sends it.
pub const REFERENCE_READING_JSON: &str = r#"{"acp_id":"elsys-co2-041ba9","acp_ts":"1589469979.861816","features":{"co2":415,"device":"elsys_co2","humidity":36,"light":0,"motion":2,"temperature":15.3,"vdd":3659}}"#;

pub fn reference_reading() -> SensorReading {
    serde_json::from_str(REFERENCE_READING_JSON).expect("built-in reading")
}
