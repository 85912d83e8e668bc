// SPDX-License-Identifier: Apache-2.0

//! The processing lane between the intake queue and the sinks.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use acp_model::{RuleFile, SensorReading, SimpleEvent};
use serde::Serialize;
use tokio::sync::mpsc;

use crate::par::{self, ExecMode};
use crate::streamproc::{detect_simple, enrich, PushSink, RoutedItem, RuleEngine, SensorLookup, StorageSink};

#[derive(Debug, Default)]
pub struct PipelineStats {
    pub readings: AtomicU64,
    pub simple_events: AtomicU64,
    pub derived_events: AtomicU64,
    pub push_deliveries: AtomicU64,
    pub push_errors: AtomicU64,
    pub store_errors: AtomicU64,
    pub late_ignored: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PipelineStatsSnapshot {
    pub readings: u64,
    pub simple_events: u64,
    pub derived_events: u64,
    pub push_deliveries: u64,
    pub push_errors: u64,
    pub store_errors: u64,
    pub late_ignored: u64,
}

impl PipelineStats {
    pub fn snapshot(&self) -> PipelineStatsSnapshot {
        let get = |c: &AtomicU64| c.load(Ordering::Acquire);
        PipelineStatsSnapshot {
            readings: get(&self.readings),
            simple_events: get(&self.simple_events),
            derived_events: get(&self.derived_events),
            push_deliveries: get(&self.push_deliveries),
            push_errors: get(&self.push_errors),
            store_errors: get(&self.store_errors),
            late_ignored: get(&self.late_ignored),
        }
    }
}

pub struct Pipeline {
    pub sensors: Arc<dyn SensorLookup + Send>,
    pub storage: Arc<dyn StorageSink>,
    pub push: Arc<dyn PushSink>,
    pub rules: RuleFile,
    pub mode: ExecMode,
    pub batch_size: usize,
}

impl Pipeline {
    /// Runs on a dedicated thread until the queue closes. Readings waiting
    /// in the queue are taken as one batch: enrichment and threshold
    /// detection run data-parallel over the batch, then rule matching and
    /// routing run sequentially in queue order. Storage counts are updated
    /// only after the batch is written, so `readings` reflects stored data.
    pub fn spawn(self, mut rx: mpsc::Receiver<SensorReading>) -> (Arc<PipelineStats>, JoinHandle<()>) {
        let stats = Arc::new(PipelineStats::default());
        let st = stats.clone();
        let handle = std::thread::Builder::new()
            .name("acp-pipeline".into())
            .spawn(move || {
                let mut engine = RuleEngine::new(self.rules.rules.clone());
                let limit = self.batch_size.max(1);
                let mut batch = Vec::with_capacity(limit);
                while let Some(first) = rx.blocking_recv() {
                    batch.push(first);
                    while batch.len() < limit {
                        match rx.try_recv() {
                            Ok(r) => batch.push(r),
                            Err(_) => break,
                        }
                    }
                    self.run_batch(std::mem::take(&mut batch), &mut engine, &st);
                }
            })
            .expect("spawn pipeline thread");
        (stats, handle)
    }

    fn run_batch(&self, batch: Vec<SensorReading>, engine: &mut RuleEngine, stats: &PipelineStats) {
        let n = batch.len() as u64;
        let processed = process_batch(batch, self.sensors.as_ref(), &self.rules, self.mode);
        let mut to_store = Vec::new();
        for (reading, simple) in processed {
            let mut items = vec![RoutedItem::Reading(reading)];
            for ev in simple {
                stats.simple_events.fetch_add(1, Ordering::Relaxed);
                let derived = engine.process(ev.clone());
                items.push(RoutedItem::Simple(ev));
                stats.derived_events.fetch_add(derived.len() as u64, Ordering::Relaxed);
                items.extend(derived.into_iter().map(RoutedItem::Derived));
            }
            for item in &items {
                match self.push.push(item) {
                    Ok(k) => stats.push_deliveries.fetch_add(k as u64, Ordering::Relaxed),
                    Err(_) => stats.push_errors.fetch_add(1, Ordering::Relaxed),
                };
            }
            to_store.extend(items);
        }
        stats.late_ignored.store(engine.ignored(), Ordering::Relaxed);
        if let Err(e) = self.storage.store_batch(&to_store) {
            stats.store_errors.fetch_add(1, Ordering::Relaxed);
            tracing::error!(error = %e, "storage write failed");
        }
        stats.readings.fetch_add(n, Ordering::Release);
    }
}

/// Enriches every reading and applies the thresholds, preserving order.
pub fn process_batch(
    batch: Vec<SensorReading>,
    sensors: &(dyn SensorLookup + Send),
    rules: &RuleFile,
    mode: ExecMode,
) -> Vec<(SensorReading, Vec<SimpleEvent>)> {
    par::map_owned(batch, mode, |r| {
        let r = enrich(r, sensors);
        let events = detect_simple(&r, &rules.thresholds);
        (r, events)
    })
}
