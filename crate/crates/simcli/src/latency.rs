// SPDX-License-Identifier: Apache-2.0

//! End-to-end latency: readings go in through the TCP intake channel and
//! come back out of a match-all websocket subscription.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use acp_core::server::{self, ServerHandle};
use acp_core::Config;
use acp_model::Timestamp;
use futures_util::{SinkExt, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use tokio::io::AsyncWriteExt;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;

use crate::error::{Result, SimError};
use crate::fleet::{gen_fleet, sensor_id};

/// Feature carrying the send sequence number.
pub const SEQ_FEATURE: &str = "sim_seq";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyParams {
    pub sensors: usize,
    /// Aggregate messages per second across the fleet.
    pub rate: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// How long to wait for stragglers after the last send.
    pub drain_s: f64,
}

#[derive(Debug, Clone)]
pub enum Endpoint {
    /// Start a server on loopback rooted at the given data directory, or a
    /// throwaway one; storage is checked afterwards.
    InProcess(Option<PathBuf>),
    /// A server that is already running.
    Remote { http: SocketAddr, tcp: SocketAddr },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub sensors: usize,
    pub rate: f64,
    pub sent: usize,
    pub received: usize,
    pub loss: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
    pub send_duration_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub storage: Option<StorageCheck>,
}

/// Every sent reading looked up in both storage views.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageCheck {
    pub expected: usize,
    pub in_sensor_files: usize,
    pub in_day_files: usize,
    pub duplication_consistent: bool,
}

impl StorageCheck {
    pub fn complete(&self) -> bool {
        self.in_sensor_files == self.expected && self.in_day_files == self.expected && self.duplication_consistent
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub async fn measure_latency(p: LatencyParams, endpoint: Endpoint) -> Result<LatencyReport> {
    if p.sensors == 0 {
        return Err(SimError::Usage("--sensors must be at least 1".into()));
    }
    if !(p.rate.is_finite() && p.rate > 0.0 && p.duration_s > 0.0) {
        return Err(SimError::Usage("--rate and --duration must be positive".into()));
    }
    let (server, _tmp, http, tcp) = match endpoint {
        Endpoint::Remote { http, tcp } => (None, None, http, tcp),
        Endpoint::InProcess(dir) => {
            let (dir, tmp) = match dir {
                Some(d) => (d, None),
                None => {
                    let tmp = tempfile::tempdir().map_err(|e| SimError::runtime("temp dir", e))?;
                    (tmp.path().to_path_buf(), Some(tmp))
                }
            };
            let server = server::start(Config::ephemeral(dir)).await.map_err(|e| SimError::runtime("starting server", e))?;
            let fleet = gen_fleet(p.sensors, p.seed)?;
            server.meta.put_crates(fleet.crates).map_err(|e| SimError::runtime("loading crates", e))?;
            server.meta.put_sensors(fleet.sensors).map_err(|e| SimError::runtime("loading sensors", e))?;
            let tcp = server.tcp_addr().ok_or_else(|| SimError::Runtime("server has no tcp_test channel".into()))?;
            let http = server.http_addr;
            (Some(server), tmp, http, tcp)
        }
    };
    let result = run(p, http, tcp, server.as_ref()).await;
    if let Some(s) = server {
        s.shutdown().await;
    }
    result
}

async fn run(p: LatencyParams, http: SocketAddr, tcp: SocketAddr, server: Option<&ServerHandle>) -> Result<LatencyReport> {
    let total = (p.rate * p.duration_s).round().max(1.0) as usize;
    let sent_at: Arc<Mutex<Vec<Option<Instant>>>> = Arc::new(Mutex::new(vec![None; total]));
    let latencies: Arc<Mutex<Vec<Option<f64>>>> = Arc::new(Mutex::new(vec![None; total]));

    let url = format!("ws://{http}/rtmonitor/WS");
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.map_err(|e| SimError::runtime("websocket connect", e))?;
    ws.send(Message::Text(json!({"msg_type": "rt_subscribe", "request_id": "simcli", "filters": []}).to_string().into()))
        .await
        .map_err(|e| SimError::runtime("subscribe", e))?;
    loop {
        let frame = next_text(&mut ws, Duration::from_secs(5)).await?;
        if frame["msg_type"] == "rt_subscribe_ok" {
            break;
        }
    }

    let (received_tx, mut received_rx) = tokio::sync::watch::channel(0usize);
    let receiver = {
        let sent_at = sent_at.clone();
        let latencies = latencies.clone();
        tokio::spawn(async move {
            let mut count = 0;
            while let Some(Ok(msg)) = ws.next().await {
                let now = Instant::now();
                let Message::Text(text) = msg else { continue };
                let Ok(frame) = serde_json::from_str::<Value>(text.as_str()) else { continue };
                let Some(seq) = frame["request_data"][0]["features"][SEQ_FEATURE].as_u64() else { continue };
                let seq = seq as usize;
                let Some(Some(start)) = sent_at.lock().unwrap().get(seq).copied() else { continue };
                let mut lat = latencies.lock().unwrap();
                if lat[seq].is_none() {
                    lat[seq] = Some(now.duration_since(start).as_secs_f64() * 1e3);
                    count += 1;
                    let _ = received_tx.send(count);
                }
            }
        })
    };

    let mut stream = TcpStream::connect(tcp).await.map_err(|e| SimError::runtime(&format!("connecting to {tcp}"), e))?;
    let _ = stream.set_nodelay(true);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut co2: Vec<f64> = (0..p.sensors).map(|_| rng.random_range(380.0..700.0)).collect();
    let mut sent_keys = Vec::with_capacity(total);
    let mut tick = tokio::time::interval(Duration::from_secs_f64(1.0 / p.rate));
    let started = Instant::now();
    for seq in 0..total {
        tick.tick().await;
        let s = seq % p.sensors;
        co2[s] = (co2[s] + rng.random_range(-40.0..40.0)).clamp(350.0, 1500.0);
        let id = sensor_id(s);
        let ts = Timestamp::now();
        let mut line = json!({
            "acp_id": id,
            "acp_ts": ts,
            "features": {"co2": co2[s].round(), "humidity": 40, SEQ_FEATURE: seq}
        })
        .to_string();
        line.push('\n');
        sent_at.lock().unwrap()[seq] = Some(Instant::now());
        stream.write_all(line.as_bytes()).await.map_err(|e| SimError::runtime("sending", e))?;
        sent_keys.push((id, ts));
    }
    let send_duration_s = started.elapsed().as_secs_f64();

    let _ = tokio::time::timeout(Duration::from_secs_f64(p.drain_s), received_rx.wait_for(|n| *n >= total)).await;
    receiver.abort();
    drop(stream);

    let mut values: Vec<f64> = latencies.lock().unwrap().iter().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    let received = values.len();
    let mean_ms = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / received as f64 };
    let storage = match server {
        Some(s) => Some(check_storage(s, &sent_keys, p.drain_s).await?),
        None => None,
    };
    Ok(LatencyReport {
        sensors: p.sensors,
        rate: p.rate,
        sent: total,
        received,
        loss: total - received,
        p50_ms: percentile(&values, 0.50),
        p95_ms: percentile(&values, 0.95),
        max_ms: values.last().copied().unwrap_or(0.0),
        mean_ms,
        send_duration_s,
        storage,
    })
}

async fn next_text<S>(ws: &mut S, limit: Duration) -> Result<Value>
where
    S: StreamExt<Item = std::result::Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let msg = tokio::time::timeout(limit, ws.next())
            .await
            .map_err(|_| SimError::Runtime("websocket timed out".into()))?
            .ok_or_else(|| SimError::Runtime("websocket closed".into()))?
            .map_err(|e| SimError::runtime("websocket", e))?;
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).map_err(|e| SimError::runtime("websocket frame", e));
        }
    }
}

async fn check_storage(server: &ServerHandle, sent: &[(String, Timestamp)], wait_s: f64) -> Result<StorageCheck> {
    // Push happens before the storage write completes; wait for the writer.
    let deadline = Instant::now() + Duration::from_secs_f64(wait_s.max(1.0));
    while (server.pipeline_stats.snapshot().readings as usize) < sent.len() && Instant::now() < deadline {
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    let err = |e| SimError::runtime("reading storage", e);
    let expected: BTreeSet<(String, Timestamp)> = sent.iter().cloned().collect();
    let (Some(first), Some(last)) = (expected.iter().map(|k| k.1).min(), expected.iter().map(|k| k.1).max()) else {
        return Ok(StorageCheck { expected: 0, in_sensor_files: 0, in_day_files: 0, duplication_consistent: true });
    };

    let ids: BTreeSet<&str> = expected.iter().map(|k| k.0.as_str()).collect();
    let mut in_sensor = BTreeSet::new();
    for id in ids {
        for r in server.readings.readings_range(id, first, last).map_err(err)? {
            in_sensor.insert((r.acp_id, r.acp_ts));
        }
    }
    let dates: BTreeSet<String> = expected.iter().map(|k| k.1.date_string()).collect();
    let mut in_day = BTreeSet::new();
    for d in dates {
        for r in server.readings.day_readings(&d).map_err(err)? {
            in_day.insert((r.acp_id, r.acp_ts));
        }
    }
    let report = server.readings.duplication_check().map_err(err)?;
    Ok(StorageCheck {
        expected: expected.len(),
        in_sensor_files: expected.intersection(&in_sensor).count(),
        in_day_files: expected.intersection(&in_day).count(),
        duplication_consistent: report.is_consistent(),
    })
}
