// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashMap, HashSet};

use acp_model::bim::MAX_HIERARCHY_DEPTH;
use acp_model::{
    validate_crate, BoundaryPolygon, CrateRecord, CrateType, DerivedEvent, EventRule, LocationRef, SimpleEvent,
    TimelinessInterval, Timestamp, Ttl,
};
use proptest::prelude::*;
use serde_json::json;

fn record(id: usize, parent: Option<usize>) -> CrateRecord {
    CrateRecord {
        crate_id: format!("c{id}"),
        parent_crate_id: parent.map(|p| format!("c{p}")),
        crate_type: CrateType::Room,
        long_name: String::new(),
        description: String::new(),
        acp_location: LocationRef::building("B", 0.0, 0.0, 0, 0.0).unwrap(),
        acp_boundary: BoundaryPolygon::new("B", vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
        acp_ts: None,
    }
}

fn event(i: usize, confidence: f64) -> SimpleEvent {
    let ts = Timestamp::from_secs(1_000 + i as u64);
    SimpleEvent {
        event_id: format!("e{i}"),
        acp_id: "s".into(),
        acp_ts: ts,
        acp_event: "x".into(),
        acp_event_value: json!(1),
        acp_confidence: confidence,
        timeliness: TimelinessInterval { start: ts, ttl: Ttl::from_micros(10_000_000).unwrap() },
        acp_type: None,
        parent_crate_id: None,
        source_features: BTreeMap::new(),
    }
}

proptest! {
    // Arbitrary upserts, including ones that would close cycles or point
    // at missing parents; only admissible ones are kept.
    #[test]
    fn admitted_hierarchies_terminate(edges in prop::collection::vec((0usize..60, prop::option::of(0usize..60)), 1..300)) {
        let mut store: HashMap<String, CrateRecord> = HashMap::new();
        for (id, parent) in edges {
            let r = record(id, parent);
            if validate_crate(&r, &store).is_admissible() {
                store.insert(r.crate_id.clone(), r);
            }
        }
        for start in store.keys() {
            let mut seen = HashSet::new();
            let mut cur = Some(start.clone());
            let mut steps = 0;
            while let Some(id) = cur {
                prop_assert!(seen.insert(id.clone()), "repeat at {}", id);
                cur = store[&id].parent_crate_id.clone();
                if cur.is_some() {
                    steps += 1;
                }
            }
            prop_assert!(steps <= MAX_HIERARCHY_DEPTH);
        }
    }

    #[test]
    fn derived_confidence_is_the_product(conf in prop::collection::vec(0.0f64..=1.0, 1..6)) {
        let steps: Vec<_> = conf.iter().map(|_| json!({"match": {"field": "acp_id", "op": "==", "value": "s"}, "ttl_s": 10})).collect();
        let rule: EventRule = serde_json::from_value(json!({"rule_id": "r", "derived_type": "d", "steps": steps})).unwrap();
        let events: Vec<SimpleEvent> = conf.iter().enumerate().map(|(i, c)| event(i, *c)).collect();
        let chain: Vec<&SimpleEvent> = events.iter().collect();
        let d = DerivedEvent::from_chain(&rule, &chain).unwrap();

        let mut product = 1.0;
        for c in &conf {
            product *= c;
        }
        let min = conf.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!((d.acp_confidence - product.clamp(0.0, 1.0)).abs() <= 1e-12);
        prop_assert!(d.acp_confidence <= min + 1e-12);
        prop_assert!((0.0..=1.0).contains(&d.acp_confidence));
        prop_assert_eq!(d.constituents.len(), conf.len());
    }
}
