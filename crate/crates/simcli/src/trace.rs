// SPDX-License-Identifier: Apache-2.0

//! JSON-lines traffic traces: one header line, then one record per send.

use std::io::{BufRead, Write};
use std::path::Path;

use acp_model::{SensorReading, Timestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Result, SimError};
use crate::fleet::sensor_id;

pub const GENERATOR_VERSION: &str = concat!("acp-simcli/", env!("CARGO_PKG_VERSION"));
pub const DEFAULT_START_SECS: u64 = 1_600_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub seed: u64,
    #[serde(rename = "generator-version")]
    pub generator_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensors: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub send_ts: Timestamp,
    pub topic: String,
    /// The message body; sent as compact JSON.
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceParams {
    pub sensors: usize,
    pub period_s: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub start: Timestamp,
}

// Per-sensor state of the synthetic feature walks.
struct Walk {
    co2: f64,
    humidity: f64,
    temperature: f64,
    motion_burst: bool,
}

impl Walk {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        Walk {
            co2: rng.random_range(380.0..700.0),
            humidity: rng.random_range(30.0..60.0),
            temperature: rng.random_range(17.0..24.0),
            motion_burst: false,
        }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> Value {
        self.co2 = (self.co2 + rng.random_range(-40.0..40.0)).clamp(350.0, 1500.0);
        self.humidity = (self.humidity + rng.random_range(-1.0..1.0)).clamp(20.0, 80.0);
        self.temperature = (self.temperature + rng.random_range(-0.2..0.2)).clamp(10.0, 30.0);
        // Motion arrives in bursts: a two-state chain, busy or quiet.
        self.motion_burst = if self.motion_burst { rng.random_bool(0.7) } else { rng.random_bool(0.05) };
        let motion = if self.motion_burst { rng.random_range(1..=8) } else { 0 };
        json!({
            "co2": self.co2.round(),
            "device": "sim_co2",
            "humidity": self.humidity.round(),
            "light": if self.motion_burst { rng.random_range(50..400) } else { 0 },
            "motion": motion,
            "temperature": (self.temperature * 10.0).round() / 10.0,
            "vdd": rng.random_range(3600..3700)
        })
    }
}

/// Every sensor reports once per period from a random phase.
pub fn gen_trace(p: TraceParams) -> Result<Trace> {
    if p.sensors == 0 {
        return Err(SimError::Usage("--sensors must be at least 1".into()));
    }
    if !(p.period_s > 0.0 && p.duration_s >= 0.0) {
        return Err(SimError::Usage("--period must be positive and --duration non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let period = (p.period_s * 1e6).round() as u64;
    let duration = (p.duration_s * 1e6).round() as u64;
    let mut walks: Vec<Walk> = (0..p.sensors).map(|_| Walk::new(&mut rng)).collect();
    let phases: Vec<u64> = (0..p.sensors).map(|_| rng.random_range(0..period.max(1))).collect();

    let mut schedule: Vec<(u64, usize)> = Vec::new();
    for (i, &phase) in phases.iter().enumerate() {
        let mut t = phase;
        while t < duration {
            schedule.push((t, i));
            t += period.max(1);
        }
    }
    schedule.sort_unstable();

    let records = schedule
        .into_iter()
        .map(|(offset, i)| {
            let ts = p.start.saturating_add_micros(offset);
            let id = sensor_id(i);
            let features = walks[i].step(&mut rng);
            TraceRecord {
                send_ts: ts,
                topic: format!("acp/{id}/up"),
                payload: json!({"acp_id": id, "acp_ts": ts, "features": features}),
            }
        })
        .collect();
    Ok(Trace {
        header: TraceHeader {
            seed: p.seed,
            generator_version: GENERATOR_VERSION.into(),
            sensors: Some(p.sensors),
            period_s: Some(p.period_s),
            duration_s: Some(p.duration_s),
        },
        records,
    })
}

pub fn write_trace(trace: &Trace, out: &mut dyn Write) -> Result<()> {
    write_line(out, &trace.header)?;
    for r in &trace.records {
        write_line(out, r)?;
    }
    Ok(())
}

fn write_line<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let mut line = serde_json::to_vec(value).map_err(|e| SimError::runtime("encoding trace", e))?;
    line.push(b'\n');
    out.write_all(&line).map_err(|e| SimError::runtime("writing trace", e))
}

pub fn save_trace(trace: &Trace, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| SimError::runtime(&format!("creating {}", path.display()), e))?;
    let mut w = std::io::BufWriter::new(file);
    write_trace(trace, &mut w)?;
    w.flush().map_err(|e| SimError::runtime("writing trace", e))
}

/// Parses a trace; a missing header is allowed for an empty file only.
pub fn read_trace(input: impl BufRead) -> Result<Trace> {
    let bad = |n: usize, e: &dyn std::fmt::Display| SimError::Usage(format!("trace line {n}: {e}"));
    let mut lines = input.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
    let header = match lines.next() {
        None => TraceHeader { seed: 0, generator_version: GENERATOR_VERSION.into(), sensors: None, period_s: None, duration_s: None },
        Some((n, line)) => {
            let line = line.map_err(|e| bad(n + 1, &e))?;
            serde_json::from_str(&line).map_err(|e| bad(n + 1, &e))?
        }
    };
    let mut records: Vec<TraceRecord> = Vec::new();
    for (n, line) in lines {
        let line = line.map_err(|e| bad(n + 1, &e))?;
        let r: TraceRecord = serde_json::from_str(&line).map_err(|e| bad(n + 1, &e))?;
        if records.last().is_some_and(|prev| prev.send_ts > r.send_ts) {
            return Err(bad(n + 1, &"send_ts decreases"));
        }
        records.push(r);
    }
    Ok(Trace { header, records })
}

pub fn load_trace(path: &Path) -> Result<Trace> {
    let file = std::fs::File::open(path).map_err(|e| SimError::Usage(format!("opening {}: {e}", path.display())))?;
    read_trace(std::io::BufReader::new(file))
}

/// Decodes every payload as a reading, stamping `send_ts` where the
/// payload carries no `acp_ts`. Extra payload keys are ignored.
pub fn trace_readings(trace: &Trace) -> Result<Vec<SensorReading>> {
    trace
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let obj = r.payload.as_object().ok_or_else(|| SimError::Usage(format!("record {i}: payload is not an object")))?;
            let mut doc = serde_json::Map::new();
            for key in ["acp_id", "acp_ts", "features"] {
                if let Some(v) = obj.get(key) {
                    doc.insert(key.into(), v.clone());
                }
            }
            doc.entry("acp_ts").or_insert_with(|| json!(r.send_ts));
            serde_json::from_value(Value::Object(doc)).map_err(|e| SimError::Usage(format!("record {i}: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(sensors: usize, period_s: f64, duration_s: f64) -> TraceParams {
        TraceParams { sensors, period_s, duration_s, seed: 42, start: Timestamp::from_secs(DEFAULT_START_SECS) }
    }

    #[test]
    fn fleet_scale_send_count() {
        let t = gen_trace(params(1000, 20.0, 120.0)).unwrap();
        // Whole periods only: each sensor sends duration / period times.
        assert_eq!(t.records.len(), 1000 * 120 / 20);
        assert!(t.records.windows(2).all(|w| w[0].send_ts <= w[1].send_ts));
        let span = (t.records.last().unwrap().send_ts.as_micros() - t.records[0].send_ts.as_micros()) as f64 / 1e6;
        let rate = t.records.len() as f64 / span;
        assert!((rate - 50.0).abs() < 1.0, "{rate}");
    }

    #[test]
    fn co2_walk_stays_in_band() {
        let t = gen_trace(params(20, 1.0, 300.0)).unwrap();
        for r in trace_readings(&t).unwrap() {
            let co2 = r.features.get("co2").unwrap();
            assert!((350.0..=1500.0).contains(&co2));
            assert_eq!(r.features.len(), 6);
        }
    }

    #[test]
    fn round_trip_and_determinism() {
        let t = gen_trace(params(7, 5.0, 60.0)).unwrap();
        let mut a = Vec::new();
        write_trace(&t, &mut a).unwrap();
        let mut b = Vec::new();
        write_trace(&gen_trace(params(7, 5.0, 60.0)).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(read_trace(&a[..]).unwrap(), t);
        let header: Value = serde_json::from_slice(a.split(|b| *b == b'\n').next().unwrap()).unwrap();
        assert_eq!(header["seed"], 42);
        assert!(header["generator-version"].as_str().unwrap().starts_with("acp-simcli/"));
    }

    #[test]
    fn empty_and_bad_traces() {
        assert!(read_trace(&b""[..]).unwrap().records.is_empty());
        let t = gen_trace(params(1, 10.0, 0.0)).unwrap();
        assert!(t.records.is_empty());
        let bad = b"{\"seed\":1,\"generator-version\":\"x\"}\n{\"send_ts\":\"5\",\"topic\":\"t\",\"payload\":{}}\n{\"send_ts\":\"4\",\"topic\":\"t\",\"payload\":{}}\n";
        assert_eq!(read_trace(&bad[..]).unwrap_err().exit_code(), 1);
        assert!(gen_trace(params(0, 1.0, 1.0)).is_err());
        assert!(gen_trace(params(1, 0.0, 1.0)).is_err());
    }

    #[test]
    fn missing_acp_ts_uses_send_ts() {
        let trace = Trace {
            header: gen_trace(params(1, 1.0, 0.0)).unwrap().header,
            records: vec![TraceRecord {
                send_ts: Timestamp::from_secs(77),
                topic: "acp/x/up".into(),
                payload: json!({"acp_id": "x", "features": {"co2": 1}, "extra": true}),
            }],
        };
        assert_eq!(trace_readings(&trace).unwrap()[0].acp_ts, Timestamp::from_secs(77));
    }
}
