// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use acp_model::{SensorReading, Timestamp};
use parking_lot::Mutex;
use serde::Serialize;
use serde_json::Value;

use super::{sanitize_component, StoreError};

const DAY_DIR: &str = "day";
const SENSOR_DIR: &str = "sensor";
const EVENT_DIR: &str = "event";
/// 9999-12-31T23:59:59.999999Z, the end of the representable calendar.
const LAST_CALENDAR_MICROS: u64 = 253_402_300_799_999_999;

/// Append-only JSONL repository holding every reading twice: once in the
/// day file `day/<date>.jsonl` and once in `sensor/<acp_id>/<date>.jsonl`.
/// Simple and derived events are kept under `event/<acp_event>/<date>.jsonl`.
///
/// Readers tolerate a torn final line left by a crash; unparseable lines
/// are skipped.
#[derive(Debug)]
pub struct ReadingsRepository {
    root: PathBuf,
    write: Mutex<()>,
}

impl ReadingsRepository {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for dir in [DAY_DIR, SENSOR_DIR, EVENT_DIR] {
            fs::create_dir_all(root.join(dir))?;
        }
        Ok(ReadingsRepository { root, write: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn day_path(&self, date: &str) -> PathBuf {
        self.root.join(DAY_DIR).join(format!("{date}.jsonl"))
    }

    fn sensor_dir(&self, acp_id: &str) -> PathBuf {
        self.root.join(SENSOR_DIR).join(sanitize_component(acp_id))
    }

    fn sensor_path(&self, acp_id: &str, date: &str) -> PathBuf {
        self.sensor_dir(acp_id).join(format!("{date}.jsonl"))
    }

    pub fn append(&self, reading: &SensorReading) -> Result<(), StoreError> {
        self.append_batch(std::slice::from_ref(reading))
    }

    /// Writes both copies of every reading. Lines bound for the same file
    /// are written together.
    pub fn append_batch(&self, readings: &[SensorReading]) -> Result<(), StoreError> {
        let mut files: BTreeMap<PathBuf, Vec<u8>> = BTreeMap::new();
        for r in readings {
            let mut line = serde_json::to_vec(r)?;
            line.push(b'\n');
            let date = r.acp_ts.date_string();
            files.entry(self.day_path(&date)).or_default().extend_from_slice(&line);
            files.entry(self.sensor_path(&r.acp_id, &date)).or_default().extend(line);
        }
        let _w = self.write.lock();
        for (path, bytes) in files {
            append_bytes(&path, &bytes)?;
        }
        Ok(())
    }

    /// Appends an event document to `event/<acp_event>/<date of ts>.jsonl`.
    pub fn append_event<T: Serialize>(&self, acp_event: &str, ts: Timestamp, doc: &T) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(doc)?;
        line.push(b'\n');
        let path = self
            .root
            .join(EVENT_DIR)
            .join(sanitize_component(acp_event))
            .join(format!("{}.jsonl", ts.date_string()));
        let _w = self.write.lock();
        append_bytes(&path, &line)
    }

    /// Events of one type on one UTC date, in append order.
    pub fn events(&self, acp_event: &str, date: &str) -> Result<Vec<Value>, StoreError> {
        let path = self.root.join(EVENT_DIR).join(sanitize_component(acp_event)).join(format!("{date}.jsonl"));
        read_lines(&path)
    }

    /// The reading with the greatest `acp_ts`; on a tie, the one appended last.
    pub fn latest_reading(&self, acp_id: &str) -> Result<Option<SensorReading>, StoreError> {
        let mut dates = self.sensor_dates(acp_id)?;
        dates.sort();
        for date in dates.iter().rev() {
            let mut best: Option<SensorReading> = None;
            for r in read_readings(&self.sensor_path(acp_id, date))? {
                if r.acp_id == acp_id && best.as_ref().is_none_or(|b| r.acp_ts >= b.acp_ts) {
                    best = Some(r);
                }
            }
            if best.is_some() {
                return Ok(best);
            }
        }
        Ok(None)
    }

    /// Readings with `from <= acp_ts <= to`, ordered by timestamp (stable
    /// with respect to append order).
    pub fn readings_range(&self, acp_id: &str, from: Timestamp, to: Timestamp) -> Result<Vec<SensorReading>, StoreError> {
        if from > to {
            return Err(StoreError::InvalidArgument(format!("range start {from} is after end {to}")));
        }
        let last = if to.as_micros() > LAST_CALENDAR_MICROS { "9999-12-31".to_string() } else { to.date_string() };
        let first = from.date_string();
        let mut dates = self.sensor_dates(acp_id)?;
        dates.retain(|d| *d >= first && *d <= last);
        dates.sort();
        let mut out = Vec::new();
        for date in dates {
            out.extend(
                read_readings(&self.sensor_path(acp_id, &date))?
                    .into_iter()
                    .filter(|r| r.acp_id == acp_id && r.acp_ts >= from && r.acp_ts <= to),
            );
        }
        out.sort_by_key(|r| r.acp_ts);
        Ok(out)
    }

    /// Every reading in one day file, in append order.
    pub fn day_readings(&self, date: &str) -> Result<Vec<SensorReading>, StoreError> {
        read_readings(&self.day_path(date))
    }

    fn sensor_dates(&self, acp_id: &str) -> Result<Vec<String>, StoreError> {
        let dir = self.sensor_dir(acp_id);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut dates = Vec::new();
        for entry in entries {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(date) = name.strip_suffix(".jsonl") {
                dates.push(date.to_string());
            }
        }
        Ok(dates)
    }

    /// Compares the two copies as multisets and checks every line sits in
    /// the file its timestamp and sensor id call for.
    pub fn duplication_check(&self) -> Result<DuplicationReport, StoreError> {
        let mut report = DuplicationReport::default();
        let mut balance: HashMap<String, i64> = HashMap::new();

        for (stem, path) in jsonl_files(&self.root.join(DAY_DIR))? {
            for r in read_readings(&path)? {
                report.day_lines += 1;
                if r.acp_ts.date_string() != stem {
                    report.misplaced += 1;
                }
                *balance.entry(canonical(&r)?).or_default() += 1;
            }
        }
        for sensor_dir in subdirs(&self.root.join(SENSOR_DIR))? {
            let dir_name = sensor_dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
            for (stem, path) in jsonl_files(&sensor_dir)? {
                for r in read_readings(&path)? {
                    report.sensor_lines += 1;
                    if r.acp_ts.date_string() != stem || sanitize_component(&r.acp_id) != dir_name {
                        report.misplaced += 1;
                    }
                    *balance.entry(canonical(&r)?).or_default() -= 1;
                }
            }
        }
        for n in balance.values() {
            if *n > 0 {
                report.only_in_day += *n as usize;
            } else {
                report.only_in_sensor += n.unsigned_abs() as usize;
            }
        }
        Ok(report)
    }
}

/// Result of [`ReadingsRepository::duplication_check`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DuplicationReport {
    pub day_lines: usize,
    pub sensor_lines: usize,
    pub only_in_day: usize,
    pub only_in_sensor: usize,
    pub misplaced: usize,
}

impl DuplicationReport {
    pub fn is_consistent(&self) -> bool {
        self.only_in_day == 0 && self.only_in_sensor == 0 && self.misplaced == 0
    }
}

fn canonical(r: &SensorReading) -> Result<String, StoreError> {
    Ok(serde_json::to_string(r)?)
}

fn append_bytes(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(bytes)?;
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<Value>, StoreError> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            Err(e) => tracing::warn!(path = %path.display(), line = n + 1, error = %e, "skipping unreadable line"),
        }
    }
    Ok(out)
}

fn read_readings(path: &Path) -> Result<Vec<SensorReading>, StoreError> {
    Ok(read_lines(path)?
        .into_iter()
        .filter_map(|v| match serde_json::from_value(v) {
            Ok(r) => Some(r),
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "skipping malformed reading");
                None
            }
        })
        .collect())
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

fn jsonl_files(dir: &Path) -> Result<Vec<(String, PathBuf)>, StoreError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if let Some(stem) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".jsonl")) {
            out.push((stem.to_string(), path.clone()));
        }
    }
    out.sort();
    Ok(out)
}
