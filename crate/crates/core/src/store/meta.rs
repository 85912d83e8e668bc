// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use acp_model::{validate_crate, CrateRecord, CrateType, SensorMetadataRecord, Timestamp, Violation};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use super::StoreError;

const CRATES_FILE: &str = "crates.json";
const SENSORS_FILE: &str = "sensors.json";

#[derive(Debug, Default)]
struct Inner {
    crates: BTreeMap<String, CrateRecord>,
    children: BTreeMap<String, BTreeSet<String>>,
    by_type: BTreeMap<String, BTreeSet<String>>,
    by_floor: BTreeMap<i64, BTreeSet<String>>,
    sensors: BTreeMap<String, SensorMetadataRecord>,
    sensors_by_parent: BTreeMap<String, BTreeSet<String>>,
}

fn unindex<K: Ord>(index: &mut BTreeMap<K, BTreeSet<String>>, key: K, id: &str) {
    if let Some(set) = index.get_mut(&key) {
        set.remove(id);
        if set.is_empty() {
            index.remove(&key);
        }
    }
}

impl Inner {
    fn insert_crate(&mut self, record: CrateRecord) {
        if let Some(old) = self.crates.remove(&record.crate_id) {
            if let Some(p) = &old.parent_crate_id {
                unindex(&mut self.children, p.clone(), &old.crate_id);
            }
            unindex(&mut self.by_type, old.crate_type.as_str().to_string(), &old.crate_id);
            if let Some(f) = old.acp_location.floor() {
                unindex(&mut self.by_floor, f, &old.crate_id);
            }
        }
        let id = record.crate_id.clone();
        if let Some(p) = &record.parent_crate_id {
            self.children.entry(p.clone()).or_default().insert(id.clone());
        }
        self.by_type
            .entry(record.crate_type.as_str().to_string())
            .or_default()
            .insert(id.clone());
        if let Some(f) = record.acp_location.floor() {
            self.by_floor.entry(f).or_default().insert(id.clone());
        }
        self.crates.insert(id, record);
    }

    fn insert_sensor(&mut self, record: SensorMetadataRecord) {
        if let Some(old) = self.sensors.remove(&record.acp_id) {
            if let Some(p) = old.parent_crate_id() {
                unindex(&mut self.sensors_by_parent, p.to_string(), &old.acp_id);
            }
        }
        if let Some(p) = record.parent_crate_id() {
            self.sensors_by_parent
                .entry(p.to_string())
                .or_default()
                .insert(record.acp_id.clone());
        }
        self.sensors.insert(record.acp_id.clone(), record);
    }

    fn tree(&self, id: &str, depth: usize) -> CrateTree {
        let record = self.crates[id].clone();
        let children = (depth > 0).then(|| {
            self.children
                .get(id)
                .into_iter()
                .flatten()
                .map(|child| self.tree(child, depth - 1))
                .collect()
        });
        CrateTree { record, children }
    }

    /// `id` and every crate below it.
    fn closure(&self, id: &str) -> Vec<String> {
        let mut out = vec![id.to_string()];
        let mut i = 0;
        while i < out.len() {
            if let Some(kids) = self.children.get(&out[i]) {
                out.extend(kids.iter().cloned());
            }
            i += 1;
        }
        out
    }
}

/// Crate and sensor metadata with secondary indexes on parent, crate type
/// and floor. Reads run concurrently; writes are serialized and, when the
/// store is backed by a directory, persisted before they return.
#[derive(Debug)]
pub struct MetadataStore {
    inner: RwLock<Inner>,
    dir: Option<PathBuf>,
    persist: Mutex<()>,
}

impl MetadataStore {
    pub fn in_memory() -> Self {
        MetadataStore {
            inner: RwLock::new(Inner::default()),
            dir: None,
            persist: Mutex::new(()),
        }
    }

    /// Opens (or creates) a store persisted under `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut inner = Inner::default();
        if let Some(crates) = read_json_array::<CrateRecord>(&dir.join(CRATES_FILE))? {
            for c in crates {
                inner.insert_crate(c);
            }
        }
        if let Some(sensors) = read_json_array::<SensorMetadataRecord>(&dir.join(SENSORS_FILE))? {
            for s in sensors {
                inner.insert_sensor(s);
            }
        }
        Ok(MetadataStore {
            inner: RwLock::new(inner),
            dir: Some(dir),
            persist: Mutex::new(()),
        })
    }

    pub fn put_crate(&self, record: CrateRecord) -> Result<(), StoreError> {
        self.put_crates(vec![record]).map(|_| ())
    }

    /// Upserts a batch, inserting parents before children regardless of
    /// input order. Fails on the first record that cannot be admitted;
    /// records admitted before it stay.
    pub fn put_crates(&self, records: Vec<CrateRecord>) -> Result<usize, StoreError> {
        let _p = self.persist.lock();
        let mut inner = self.inner.write();
        let mut pending: Vec<CrateRecord> = records
            .into_iter()
            .map(|mut r| {
                r.normalize();
                r
            })
            .collect();
        let mut admitted = 0;
        let mut failure = None;
        while !pending.is_empty() {
            let before = pending.len();
            let mut deferred = Vec::new();
            for mut record in pending {
                let report = validate_crate(&record, &inner.crates);
                if report.is_admissible() {
                    record.acp_ts.get_or_insert_with(Timestamp::now);
                    inner.insert_crate(record);
                    admitted += 1;
                } else {
                    let waits_on_batch = report
                        .violations
                        .iter()
                        .all(|v| matches!(v, Violation::UnknownParent(_)));
                    if waits_on_batch {
                        deferred.push(record);
                    } else {
                        failure = Some(StoreError::Rejected { id: record.crate_id.clone(), report });
                        break;
                    }
                }
            }
            if failure.is_some() {
                break;
            }
            if deferred.len() == before {
                let record = &deferred[0];
                failure = Some(StoreError::Rejected {
                    id: record.crate_id.clone(),
                    report: validate_crate(record, &inner.crates),
                });
                break;
            }
            pending = deferred;
        }
        if admitted > 0 {
            self.persist_crates(&inner)?;
        }
        match failure {
            Some(err) => Err(err),
            None => Ok(admitted),
        }
    }

    pub fn crate_record(&self, crate_id: &str) -> Option<CrateRecord> {
        self.inner.read().crates.get(crate_id).cloned()
    }

    /// The crate plus `depth` generations of descendants.
    pub fn get_crate(&self, crate_id: &str, depth: usize) -> Result<CrateTree, StoreError> {
        let inner = self.inner.read();
        if !inner.crates.contains_key(crate_id) {
            return Err(StoreError::not_found("crate", crate_id));
        }
        Ok(inner.tree(crate_id, depth))
    }

    /// Rooms on `floor` plus the floor crate itself, ordered by crate_id.
    pub fn crates_on_floor(&self, floor: i64) -> Vec<CrateRecord> {
        let inner = self.inner.read();
        inner
            .by_floor
            .get(&floor)
            .into_iter()
            .flatten()
            .map(|id| &inner.crates[id])
            .filter(|c| matches!(c.crate_type, CrateType::Room | CrateType::Floor))
            .cloned()
            .collect()
    }

    pub fn crates_of_type(&self, crate_type: &CrateType) -> Vec<CrateRecord> {
        let inner = self.inner.read();
        inner
            .by_type
            .get(crate_type.as_str())
            .into_iter()
            .flatten()
            .map(|id| inner.crates[id].clone())
            .collect()
    }

    pub fn children_of(&self, crate_id: &str) -> Vec<CrateRecord> {
        let inner = self.inner.read();
        inner
            .children
            .get(crate_id)
            .into_iter()
            .flatten()
            .map(|id| inner.crates[id].clone())
            .collect()
    }

    pub fn all_crates(&self) -> Vec<CrateRecord> {
        self.inner.read().crates.values().cloned().collect()
    }

    pub fn crate_count(&self) -> usize {
        self.inner.read().crates.len()
    }

    pub fn put_sensor(&self, record: SensorMetadataRecord) -> Result<(), StoreError> {
        self.put_sensors(vec![record]).map(|_| ())
    }

    pub fn put_sensors(&self, records: Vec<SensorMetadataRecord>) -> Result<usize, StoreError> {
        for r in &records {
            r.validate()
                .map_err(|e| StoreError::InvalidArgument(format!("{}: {e}", r.acp_id)))?;
        }
        let _p = self.persist.lock();
        let mut inner = self.inner.write();
        let n = records.len();
        for mut r in records {
            r.acp_ts.get_or_insert_with(Timestamp::now);
            inner.insert_sensor(r);
        }
        self.persist_sensors(&inner)?;
        Ok(n)
    }

    pub fn get_sensor(&self, acp_id: &str) -> Result<SensorMetadataRecord, StoreError> {
        self.inner
            .read()
            .sensors
            .get(acp_id)
            .cloned()
            .ok_or_else(|| StoreError::not_found("sensor", acp_id))
    }

    pub fn has_sensor(&self, acp_id: &str) -> bool {
        self.inner.read().sensors.contains_key(acp_id)
    }

    /// Sensors placed in `crate_id` (and, when `recursive`, anywhere below
    /// it), ordered by acp_id.
    pub fn sensors_in_crate(
        &self,
        crate_id: &str,
        recursive: bool,
    ) -> Result<Vec<SensorMetadataRecord>, StoreError> {
        let inner = self.inner.read();
        if !inner.crates.contains_key(crate_id) {
            return Err(StoreError::not_found("crate", crate_id));
        }
        let scope = if recursive { inner.closure(crate_id) } else { vec![crate_id.to_string()] };
        let ids: BTreeSet<&String> = scope
            .iter()
            .filter_map(|c| inner.sensors_by_parent.get(c))
            .flatten()
            .collect();
        Ok(ids.into_iter().map(|id| inner.sensors[id].clone()).collect())
    }

    pub fn all_sensors(&self) -> Vec<SensorMetadataRecord> {
        self.inner.read().sensors.values().cloned().collect()
    }

    pub fn sensor_count(&self) -> usize {
        self.inner.read().sensors.len()
    }

    fn persist_crates(&self, inner: &Inner) -> Result<(), StoreError> {
        match &self.dir {
            Some(dir) => write_json_atomic(&dir.join(CRATES_FILE), &inner.crates.values().collect::<Vec<_>>()),
            None => Ok(()),
        }
    }

    fn persist_sensors(&self, inner: &Inner) -> Result<(), StoreError> {
        match &self.dir {
            Some(dir) => write_json_atomic(&dir.join(SENSORS_FILE), &inner.sensors.values().collect::<Vec<_>>()),
            None => Ok(()),
        }
    }
}

fn read_json_array<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<Vec<T>>, StoreError> {
    match fs::read(path) {
        Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        serde_json::to_writer(&mut f, value)?;
        f.write_all(b"\n")?;
        f.sync_data()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// A crate with an optional nested `children` list.
///
/// Depth 0 omits the `children` key entirely; a leaf at depth ≥ 1 has an
/// empty list.
#[derive(Debug, Clone, PartialEq)]
pub struct CrateTree {
    pub record: CrateRecord,
    pub children: Option<Vec<CrateTree>>,
}

impl CrateTree {
    /// Every crate id in the tree, root first, depth-first.
    pub fn ids(&self) -> Vec<String> {
        let mut out = vec![self.record.crate_id.clone()];
        for child in self.children.iter().flatten() {
            out.extend(child.ids());
        }
        out
    }
}

impl Serialize for CrateTree {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut doc = serde_json::to_value(&self.record).map_err(serde::ser::Error::custom)?;
        if let (Some(children), Value::Object(map)) = (&self.children, &mut doc) {
            let kids = serde_json::to_value(children).map_err(serde::ser::Error::custom)?;
            map.insert("children".into(), kids);
        }
        doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CrateTree {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let mut doc = Value::deserialize(d)?;
        let children = match doc.as_object_mut().and_then(|m| m.remove("children")) {
            Some(v) => Some(serde_json::from_value(v).map_err(serde::de::Error::custom)?),
            None => None,
        };
        let record = serde_json::from_value(doc).map_err(serde::de::Error::custom)?;
        Ok(CrateTree { record, children })
    }
}
