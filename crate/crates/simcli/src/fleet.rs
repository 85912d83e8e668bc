// SPDX-License-Identifier: Apache-2.0

//! Synthetic sensor fleets placed in the seed building.

use std::path::Path;

use acp_core::seed;
use acp_model::{CrateRecord, LocationRef, SensorMetadataRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const FEATURES: [&str; 6] = ["co2", "humidity", "light", "motion", "temperature", "vdd"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fleet {
    pub crates: Vec<CrateRecord>,
    pub sensors: Vec<SensorMetadataRecord>,
}

pub fn sensor_id(i: usize) -> String {
    format!("sim-co2-{i:06x}")
}

/// `n` co2 sensors spread over the seed crates. Sensor 0 is always in FE11.
pub fn gen_fleet(n: usize, seed: u64) -> Result<Fleet> {
    if n == 0 {
        return Err(SimError::Usage("--sensors must be at least 1".into()));
    }
    if n > 0x100_0000 {
        return Err(SimError::Usage("--sensors must fit a six-digit hex id".into()));
    }
    let crates = seed::crates();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fe11 = crates.iter().position(|c| c.crate_id == "FE11").expect("seed room");
    let sensors = (0..n)
        .map(|i| {
            let host = if i == 0 { &crates[fe11] } else { &crates[rng.random_range(0..crates.len())] };
            place(i, host, &mut rng)
        })
        .collect();
    Ok(Fleet { crates, sensors })
}

fn place(i: usize, host: &CrateRecord, rng: &mut ChaCha8Rng) -> SensorMetadataRecord {
    let (ox, oy) = host.acp_location.xy().unwrap_or((0.0, 0.0));
    let floor = host.acp_location.floor().unwrap_or(0);
    let (w, h) = extent(host);
    let x = round2(ox + rng.random_range(0.0..=w));
    let y = round2(oy + rng.random_range(0.0..=h));
    SensorMetadataRecord {
        acp_id: sensor_id(i),
        acp_type: "co2".into(),
        owner: "simcli".into(),
        source: "sim".into(),
        features: FEATURES.iter().map(|s| s.to_string()).collect(),
        acp_location: LocationRef::building("WGB", x, y, floor, 1.0)
            .expect("finite coordinates")
            .with_parent(host.crate_id.clone()),
        acp_ts: None,
    }
}

fn extent(c: &CrateRecord) -> (f64, f64) {
    let pts = &c.acp_boundary.points;
    let span = |k: usize| {
        let lo = pts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo { hi - lo } else { 0.0 }
    };
    (span(0), span(1))
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Writes `crates.json` and `sensors.json` under `dir`.
pub fn write_fleet(fleet: &Fleet, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::runtime("creating output dir", e))?;
    write_json(&dir.join("crates.json"), &fleet.crates)?;
    write_json(&dir.join("sensors.json"), &fleet.sensors)
}

pub fn read_fleet(dir: &Path) -> Result<Fleet> {
    Ok(Fleet { crates: read_json(&dir.join("crates.json"))?, sensors: read_json(&dir.join("sensors.json"))? })
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| SimError::runtime("encoding", e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| SimError::runtime(&format!("writing {}", path.display()), e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Usage(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| SimError::Usage(format!("parsing {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn ids_and_count() {
        let f = gen_fleet(1000, 42).unwrap();
        assert_eq!(f.sensors.len(), 1000);
        assert_eq!(f.sensors[999].acp_id, "sim-co2-0003e7");
        let ids: BTreeSet<_> = f.sensors.iter().map(|s| &s.acp_id).collect();
        assert_eq!(ids.len(), 1000);
        assert!(f.sensors.iter().all(|s| acp_model::sensor::is_generated_id(&s.acp_id)));
        let crates: BTreeSet<_> = f.crates.iter().map(|c| c.crate_id.as_str()).collect();
        assert_eq!(crates, BTreeSet::from(["FE11", "FF", "GF", "WGB"]));
        let used: BTreeSet<_> = f.sensors.iter().filter_map(|s| s.parent_crate_id()).collect();
        assert_eq!(used, crates);
    }

    #[test]
    fn single_sensor_in_room() {
        let f = gen_fleet(1, 9).unwrap();
        assert_eq!(f.sensors[0].parent_crate_id(), Some("FE11"));
    }

    #[test]
    fn deterministic_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_fleet(&gen_fleet(50, 3).unwrap(), a.path()).unwrap();
        write_fleet(&gen_fleet(50, 3).unwrap(), b.path()).unwrap();
        for f in ["crates.json", "sensors.json"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        }
        assert_eq!(read_fleet(a.path()).unwrap(), gen_fleet(50, 3).unwrap());
        assert_ne!(gen_fleet(50, 4).unwrap(), gen_fleet(50, 3).unwrap());
    }

    #[test]
    fn zero_sensors_is_usage_error() {
        assert_eq!(gen_fleet(0, 1).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn records_pass_store_validation() {
        let f = gen_fleet(200, 5).unwrap();
        let store = acp_core::store::MetadataStore::in_memory();
        store.put_crates(f.crates).unwrap();
        store.put_sensors(f.sensors).unwrap();
        assert_eq!(store.sensor_count(), 200);
    }
}
