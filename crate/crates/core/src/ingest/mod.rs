// SPDX-License-Identifier: Apache-2.0

//! Message intake: every accepted payload is timestamped and archived
//! before decoding; decoded readings go to the processing queue in arrival
//! order, undecodable ones to the quarantine log.

mod decode;
mod intake;

pub use decode::{acp_id_from_topic, Decoder, DecoderRegistry, JsonDecoder};
pub use intake::{backoff_delay, start_intake, ChannelHealth, IntakeError, IntakeHandle};

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use acp_model::{SensorReading, Timestamp};
use base64::Engine;
use parking_lot::Mutex;
use serde::Serialize;
use tokio::sync::mpsc;

use crate::store::{sanitize_component, MetadataStore};

#[derive(Debug, Clone, PartialEq)]
pub struct RawEnvelope {
    /// Channel tag, e.g. `mqtt` or `tcp_test`.
    pub source: String,
    pub topic: String,
    pub payload: Vec<u8>,
    pub arrival_ts: Timestamp,
}

impl RawEnvelope {
    /// Envelope stamped with the current time.
    pub fn arrive(source: impl Into<String>, topic: impl Into<String>, payload: Vec<u8>) -> Self {
        RawEnvelope { source: source.into(), topic: topic.into(), payload, arrival_ts: Timestamp::now() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestOutcome {
    pub archived: bool,
    pub decoded: bool,
    pub enqueued: bool,
    /// Rejected before archiving (oversized payload).
    pub dropped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub archive_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Default)]
pub struct IngestStats {
    pub received: AtomicU64,
    pub archived: AtomicU64,
    pub archive_failures: AtomicU64,
    pub decoded: AtomicU64,
    pub quarantined: AtomicU64,
    pub enqueued: AtomicU64,
    pub dropped_oversize: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestStatsSnapshot {
    pub received: u64,
    pub archived: u64,
    pub archive_failures: u64,
    pub decoded: u64,
    pub quarantined: u64,
    pub enqueued: u64,
    pub dropped_oversize: u64,
}

impl IngestStats {
    pub fn snapshot(&self) -> IngestStatsSnapshot {
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        IngestStatsSnapshot {
            received: get(&self.received),
            archived: get(&self.archived),
            archive_failures: get(&self.archive_failures),
            decoded: get(&self.decoded),
            quarantined: get(&self.quarantined),
            enqueued: get(&self.enqueued),
            dropped_oversize: get(&self.dropped_oversize),
        }
    }
}

fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

/// Shared by all intake channels. `on_message` is safe to call from many
/// tasks; ordering is preserved per caller.
pub struct Ingestor {
    data_dir: PathBuf,
    registry: DecoderRegistry,
    meta: Arc<MetadataStore>,
    queue: Mutex<Option<mpsc::Sender<SensorReading>>>,
    max_payload: usize,
    archive_lock: Mutex<()>,
    stats: Arc<IngestStats>,
}

impl std::fmt::Debug for Ingestor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ingestor").field("data_dir", &self.data_dir).finish_non_exhaustive()
    }
}

impl Ingestor {
    pub fn new(
        data_dir: impl Into<PathBuf>,
        registry: DecoderRegistry,
        meta: Arc<MetadataStore>,
        queue: mpsc::Sender<SensorReading>,
        max_payload: usize,
    ) -> Self {
        Ingestor {
            data_dir: data_dir.into(),
            registry,
            meta,
            queue: Mutex::new(Some(queue)),
            max_payload,
            archive_lock: Mutex::new(()),
            stats: Arc::new(IngestStats::default()),
        }
    }

    pub fn stats(&self) -> Arc<IngestStats> {
        self.stats.clone()
    }

    /// Stops enqueueing; the processing queue closes once in-flight sends finish.
    pub fn close(&self) {
        self.queue.lock().take();
    }

    /// Archive, decode, enqueue. Waits for queue capacity rather than dropping.
    pub async fn on_message(&self, envelope: RawEnvelope) -> IngestOutcome {
        bump(&self.stats.received);
        let mut outcome = IngestOutcome::default();
        if envelope.payload.len() > self.max_payload {
            bump(&self.stats.dropped_oversize);
            outcome.dropped = true;
            outcome.error = Some(format!("payload of {} bytes exceeds {}", envelope.payload.len(), self.max_payload));
            return outcome;
        }

        match self.archive_raw(&envelope) {
            Ok(path) => {
                bump(&self.stats.archived);
                outcome.archived = true;
                outcome.archive_path = Some(path);
            }
            Err(e) => {
                bump(&self.stats.archive_failures);
                tracing::error!(topic = %envelope.topic, error = %e, "archive failed");
                outcome.error = Some(format!("archive: {e}"));
            }
        }

        let reading = match self.decode(&envelope) {
            Ok(r) => r,
            Err(reason) => {
                bump(&self.stats.quarantined);
                if let Err(e) = self.quarantine(&envelope, &reason) {
                    tracing::error!(error = %e, "quarantine write failed");
                }
                outcome.error.get_or_insert(reason);
                return outcome;
            }
        };
        bump(&self.stats.decoded);
        outcome.decoded = true;

        let sender = self.queue.lock().clone();
        if let Some(tx) = sender {
            if tx.send(reading).await.is_ok() {
                bump(&self.stats.enqueued);
                outcome.enqueued = true;
            }
        }
        outcome
    }

    fn decode(&self, envelope: &RawEnvelope) -> Result<SensorReading, String> {
        let acp_type = self.type_hint(envelope);
        self.registry.decoder_for(acp_type.as_deref()).decode(envelope)
    }

    // The sensor type selects the decoder; the id comes from the topic or,
    // failing that, from a JSON payload.
    fn type_hint(&self, envelope: &RawEnvelope) -> Option<String> {
        let id = match acp_id_from_topic(&envelope.topic) {
            Some(id) => id.to_string(),
            None => serde_json::from_slice::<serde_json::Value>(&envelope.payload)
                .ok()?
                .get("acp_id")?
                .as_str()?
                .to_string(),
        };
        self.meta.get_sensor(&id).ok().map(|s| s.acp_type)
    }

    /// Writes the payload to `raw/<date>/<topic>_<micros>.bin`, adding a
    /// `-<n>` suffix when that name is taken.
    pub fn archive_raw(&self, envelope: &RawEnvelope) -> std::io::Result<PathBuf> {
        archive_raw(&self.data_dir, envelope, &self.archive_lock)
    }

    fn quarantine(&self, envelope: &RawEnvelope, reason: &str) -> std::io::Result<()> {
        let dir = self.data_dir.join("quarantine");
        fs::create_dir_all(&dir)?;
        let record = serde_json::json!({
            "arrival_ts": envelope.arrival_ts,
            "topic": envelope.topic,
            "reason": reason,
            "payload_base64": base64::engine::general_purpose::STANDARD.encode(&envelope.payload),
        });
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        let path = dir.join(format!("{}.jsonl", envelope.arrival_ts.date_string()));
        let _g = self.archive_lock.lock();
        OpenOptions::new().create(true).append(true).open(path)?.write_all(&line)
    }
}

fn archive_raw(data_dir: &Path, envelope: &RawEnvelope, lock: &Mutex<()>) -> std::io::Result<PathBuf> {
    let dir = data_dir.join("raw").join(envelope.arrival_ts.date_string());
    fs::create_dir_all(&dir)?;
    let stem = format!("{}_{}", sanitize_component(&envelope.topic), envelope.arrival_ts.as_micros());
    let _g = lock.lock();
    for n in 0u64.. {
        let name = if n == 0 { format!("{stem}.bin") } else { format!("{stem}-{n}.bin") };
        let path = dir.join(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                f.write_all(&envelope.payload)?;
                return Ok(path);
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!("suffix space exhausted")
}
