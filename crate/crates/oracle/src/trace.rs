// SPDX-License-Identifier: Apache-2.0

//! Seeded random event traces and rule sets for equivalence testing.

use acp_model::{
    Comparator, EventRule, FieldSelector, Predicate, RuleStep, SimpleEvent, Timestamp, TimelinessInterval, Ttl,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const MAX_EVENTS: usize = 2_000;
pub const MAX_RULES: usize = 5;

const EVENT_TYPES: [&str; 3] = ["motion", "door", "co2_high"];
const TRACE_START_SECS: u64 = 1_600_000_000;

#[derive(Debug, Clone)]
pub struct RandomCase {
    pub seed: u64,
    pub events: Vec<SimpleEvent>,
    pub rules: Vec<EventRule>,
}

/// Deterministic case for `seed`: up to [`MAX_EVENTS`] events in
/// non-decreasing time order (with deliberate ties) and up to
/// [`MAX_RULES`] rules of one to three steps.
pub fn random_case(seed: u64) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sensors = rng.random_range(2..=6usize);
    let sensors: Vec<String> = (0..n_sensors).map(|i| format!("S{i}")).collect();

    let n_rules = rng.random_range(1..=MAX_RULES);
    let rules = (0..n_rules)
        .map(|r| random_rule(&mut rng, r, &sensors))
        .collect();

    let n_events = rng.random_range(1..=MAX_EVENTS);
    let mut ts = TRACE_START_SECS * 1_000_000;
    let mut events = Vec::with_capacity(n_events);
    for i in 0..n_events {
        if rng.random_bool(0.8) {
            // Millisecond steps make exact window-edge hits likely.
            ts += rng.random_range(0..3_000u64) * 1_000;
        }
        events.push(random_event(&mut rng, i, ts, &sensors));
    }
    RandomCase { seed, events, rules }
}

fn random_rule(rng: &mut ChaCha8Rng, index: usize, sensors: &[String]) -> EventRule {
    let n_steps = rng.random_range(1..=3usize);
    let steps = (0..n_steps)
        .map(|_| {
            let mut predicates = vec![Predicate::new(
                FieldSelector::AcpId,
                Comparator::Eq,
                sensors[rng.random_range(0..sensors.len())].clone(),
            )];
            if rng.random_bool(0.5) {
                predicates.push(Predicate::new(
                    FieldSelector::AcpEvent,
                    Comparator::Eq,
                    EVENT_TYPES[rng.random_range(0..EVENT_TYPES.len())],
                ));
            }
            if rng.random_bool(0.3) {
                predicates.push(Predicate::new(
                    FieldSelector::Feature("level".into()),
                    Comparator::Ge,
                    rng.random_range(0..10),
                ));
            }
            RuleStep {
                predicates,
                ttl: Ttl::from_micros(rng.random_range(1..=15_000u64) * 1_000).expect("positive"),
            }
        })
        .collect();
    EventRule {
        rule_id: format!("rule{index}"),
        derived_type: format!("derived{index}"),
        value_template: "{first_acp_id}..{last_acp_id}".into(),
        steps,
    }
}

fn random_event(rng: &mut ChaCha8Rng, index: usize, ts: u64, sensors: &[String]) -> SimpleEvent {
    let start = Timestamp::from_micros(ts);
    let level = rng.random_range(0..10) as f64;
    SimpleEvent {
        event_id: format!("e{index}"),
        acp_id: sensors[rng.random_range(0..sensors.len())].clone(),
        acp_ts: start,
        acp_event: EVENT_TYPES[rng.random_range(0..EVENT_TYPES.len())].to_string(),
        acp_event_value: json!(level),
        acp_confidence: rng.random_range(1..=100u32) as f64 / 100.0,
        timeliness: TimelinessInterval {
            start,
            ttl: Ttl::from_micros(rng.random_range(1..=30u64) * 1_000_000).expect("positive"),
        },
        acp_type: None,
        parent_crate_id: None,
        source_features: [("level".to_string(), level)].into(),
    }
}
