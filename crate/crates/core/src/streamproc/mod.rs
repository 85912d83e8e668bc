// SPDX-License-Identifier: Apache-2.0

//! Enrichment, threshold detection, sequence-rule detection and fan-out.

mod rules;

pub use rules::RuleEngine;

use std::collections::HashMap;

use acp_model::event::{FieldSelector, FieldSource, FieldValue};
use acp_model::{DerivedEvent, SensorMetadataRecord, SensorReading, SimpleEvent, ThresholdSpec, Timestamp};
use serde::Serialize;
use serde_json::Value;

use crate::store::{MetadataStore, ReadingsRepository};

/// Read access to sensor metadata by id.
pub trait SensorLookup: Sync {
    fn sensor(&self, acp_id: &str) -> Option<SensorMetadataRecord>;
}

impl SensorLookup for MetadataStore {
    fn sensor(&self, acp_id: &str) -> Option<SensorMetadataRecord> {
        self.get_sensor(acp_id).ok()
    }
}

impl SensorLookup for HashMap<String, SensorMetadataRecord> {
    fn sensor(&self, acp_id: &str) -> Option<SensorMetadataRecord> {
        self.get(acp_id).cloned()
    }
}

/// Copies type and placement from the sensor's metadata, or flags the
/// reading as unregistered. Applying it twice changes nothing.
pub fn enrich(mut reading: SensorReading, sensors: &dyn SensorLookup) -> SensorReading {
    match sensors.sensor(&reading.acp_id) {
        Some(meta) => {
            reading.parent_crate_id = meta.parent_crate_id().map(str::to_string);
            reading.acp_type = Some(meta.acp_type);
            reading.acp_location = Some(meta.acp_location);
            reading.unregistered = false;
        }
        None => {
            reading.acp_type = None;
            reading.acp_location = None;
            reading.parent_crate_id = None;
            reading.unregistered = true;
        }
    }
    reading
}

/// One event per matching spec, in spec order.
pub fn detect_simple(reading: &SensorReading, specs: &[ThresholdSpec]) -> Vec<SimpleEvent> {
    specs
        .iter()
        .enumerate()
        .filter_map(|(i, spec)| SimpleEvent::from_threshold(reading, spec, i))
        .collect()
}

/// Anything that leaves the processing lane.
#[derive(Debug, Clone, PartialEq)]
pub enum RoutedItem {
    Reading(SensorReading),
    Simple(SimpleEvent),
    Derived(DerivedEvent),
}

impl RoutedItem {
    pub fn acp_ts(&self) -> Timestamp {
        match self {
            RoutedItem::Reading(r) => r.acp_ts,
            RoutedItem::Simple(e) => e.acp_ts,
            RoutedItem::Derived(e) => e.acp_ts,
        }
    }

    /// The JSON document stored and pushed for this item.
    pub fn to_document(&self) -> Value {
        let doc = match self {
            RoutedItem::Reading(r) => serde_json::to_value(r),
            RoutedItem::Simple(e) => serde_json::to_value(e),
            RoutedItem::Derived(e) => serde_json::to_value(e),
        };
        doc.expect("model types serialize")
    }
}

impl FieldSource for RoutedItem {
    fn field(&self, selector: &FieldSelector) -> Option<FieldValue<'_>> {
        match self {
            RoutedItem::Reading(r) => r.field(selector),
            RoutedItem::Simple(e) => e.field(selector),
            RoutedItem::Derived(e) => e.field(selector),
        }
    }
}

/// Durable destination. May block; errors are reported, never retried here.
pub trait StorageSink: Send + Sync {
    fn store(&self, item: &RoutedItem) -> Result<(), String>;

    fn store_batch(&self, items: &[RoutedItem]) -> Result<(), String> {
        items.iter().try_for_each(|i| self.store(i))
    }
}

/// Real-time destination. Must not block; returns the number of deliveries.
pub trait PushSink: Send + Sync {
    fn push(&self, item: &RoutedItem) -> Result<usize, String>;
}

impl StorageSink for ReadingsRepository {
    fn store(&self, item: &RoutedItem) -> Result<(), String> {
        self.store_batch(std::slice::from_ref(item))
    }

    fn store_batch(&self, items: &[RoutedItem]) -> Result<(), String> {
        let readings: Vec<SensorReading> = items
            .iter()
            .filter_map(|i| match i {
                RoutedItem::Reading(r) => Some(r.clone()),
                _ => None,
            })
            .collect();
        let mut result = self.append_batch(&readings).map_err(|e| e.to_string());
        for item in items {
            let outcome = match item {
                RoutedItem::Reading(_) => Ok(()),
                RoutedItem::Simple(e) => self.append_event(&e.acp_event, e.acp_ts, e),
                RoutedItem::Derived(e) => self.append_event(&e.acp_event, e.acp_ts, e),
            };
            if let Err(e) = outcome {
                result = result.and(Err(e.to_string()));
            }
        }
        result
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FanoutReport {
    pub store: Result<(), String>,
    pub push: Result<usize, String>,
}

/// Pushes first, then stores, so a failing or slow store never holds back
/// real-time delivery.
pub fn route(item: &RoutedItem, storage: &dyn StorageSink, push: &dyn PushSink) -> FanoutReport {
    let push = push.push(item);
    let store = storage.store(item);
    FanoutReport { store, push }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use acp_model::{Comparator, Ttl};
    use parking_lot::Mutex;

    fn sensors() -> HashMap<String, SensorMetadataRecord> {
        [(seed::SENSOR_ID.to_string(), seed::reference_sensor())].into()
    }

    fn co2_spec(value: f64, name: &str) -> ThresholdSpec {
        ThresholdSpec {
            acp_type: Some("co2".into()),
            acp_id: None,
            feature: "co2".into(),
            op: Comparator::Gt,
            value,
            event_name: name.into(),
            ttl_s: Ttl::from_secs_f64(300.0).unwrap(),
            confidence: 0.95,
        }
    }

    #[test]
    fn enrich_copies_placement_and_is_idempotent() {
        let once = enrich(seed::reference_reading(), &sensors());
        assert_eq!(once.parent_crate_id.as_deref(), Some("FE11"));
        assert_eq!(once.acp_type.as_deref(), Some("co2"));
        assert_eq!(enrich(once.clone(), &sensors()), once);
    }

    #[test]
    fn unknown_sensor_flagged() {
        let mut r = seed::reference_reading();
        r.acp_id = "nobody-here-000000".into();
        let out = enrich(r.clone(), &sensors());
        assert!(out.unregistered);
        assert_eq!(out.features, r.features);
        assert!(out.acp_type.is_none());
    }

    #[test]
    fn threshold_events() {
        let r = enrich(seed::reference_reading(), &sensors());
        let evs = detect_simple(&r, &[co2_spec(400.0, "co2_high")]);
        assert_eq!(evs.len(), 1);
        assert_eq!(evs[0].acp_event, "co2_high");
        assert_eq!(evs[0].acp_event_value, serde_json::json!(415));
        assert_eq!(evs[0].acp_confidence, 0.95);
        assert_eq!(evs[0].timeliness.end(), r.acp_ts.saturating_add_micros(300_000_000));

        assert!(detect_simple(&r, &[co2_spec(415.0, "strict")]).is_empty());
        let two = detect_simple(&r, &[co2_spec(100.0, "first"), co2_spec(200.0, "second")]);
        let names: Vec<_> = two.iter().map(|e| e.acp_event.as_str()).collect();
        assert_eq!(names, ["first", "second"]);
    }

    struct FailingStore;
    impl StorageSink for FailingStore {
        fn store(&self, _: &RoutedItem) -> Result<(), String> {
            Err("disk full".into())
        }
    }

    #[derive(Default)]
    struct Recorder(Mutex<Vec<RoutedItem>>);
    impl PushSink for Recorder {
        fn push(&self, item: &RoutedItem) -> Result<usize, String> {
            self.0.lock().push(item.clone());
            Ok(1)
        }
    }
    impl StorageSink for Recorder {
        fn store(&self, item: &RoutedItem) -> Result<(), String> {
            self.0.lock().push(item.clone());
            Ok(())
        }
    }

    #[test]
    fn storage_failure_does_not_block_push() {
        let push = Recorder::default();
        let item = RoutedItem::Reading(seed::reference_reading());
        let report = route(&item, &FailingStore, &push);
        assert_eq!(report.store, Err("disk full".into()));
        assert_eq!(report.push, Ok(1));
        assert_eq!(push.0.lock().len(), 1);
    }

    #[test]
    fn derived_event_reaches_both_sinks_with_rule_id() {
        let store = Recorder::default();
        let push = Recorder::default();
        let r = enrich(seed::reference_reading(), &sensors());
        let simple = detect_simple(&r, &[co2_spec(400.0, "co2_high")]).remove(0);
        let rule: acp_model::EventRule = serde_json::from_value(serde_json::json!({
            "rule_id": "stuffy",
            "derived_type": "stuffy_room",
            "steps": [{"match": {"field": "acp_event", "op": "==", "value": "co2_high"}, "ttl_s": 60}]
        }))
        .unwrap();
        let derived = DerivedEvent::from_chain(&rule, &[&simple]).unwrap();
        let report = route(&RoutedItem::Derived(derived), &store, &push);
        assert_eq!(report, FanoutReport { store: Ok(()), push: Ok(1) });
        for sink in [&store, &push] {
            assert_eq!(sink.0.lock()[0].to_document()["rule_id"], "stuffy");
        }
    }
}
