// SPDX-License-Identifier: Apache-2.0

//! Reference implementation of derived-event detection.
//!
//! Works over a whole trace at once: events are sorted by `(acp_ts,
//! arrival)`, then for every event that satisfies a rule's final step the
//! earlier, still unconsumed events are searched backwards for the latest
//! chain in which each event falls inside its predecessor's window. This
//! crate depends on the model only, never on the streaming engine.

pub mod trace;

use acp_model::{DerivedEvent, EventRule, SensorReading, SimpleEvent, ThresholdSpec};

/// Applies every threshold to every reading, in reading then spec order.
pub fn simple_events(readings: &[SensorReading], thresholds: &[ThresholdSpec]) -> Vec<SimpleEvent> {
    let mut out = Vec::new();
    for reading in readings {
        for (i, spec) in thresholds.iter().enumerate() {
            if let Some(ev) = SimpleEvent::from_threshold(reading, spec, i) {
                out.push(ev);
            }
        }
    }
    out
}

/// All derived events for `events` (given in arrival order) under `rules`.
///
/// Output order is by completing event, then by rule order.
pub fn derive(events: &[SimpleEvent], rules: &[EventRule]) -> Vec<DerivedEvent> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| (events[i].acp_ts, i));
    let sorted: Vec<&SimpleEvent> = order.iter().map(|&i| &events[i]).collect();

    let mut consumed = vec![vec![false; sorted.len()]; rules.len()];
    let mut out = Vec::new();
    for pos in 0..sorted.len() {
        for (r, rule) in rules.iter().enumerate() {
            let last_step = rule.steps.len() - 1;
            if !rule.steps[last_step].matches(sorted[pos]) {
                continue;
            }
            let chain = if last_step == 0 {
                Some(vec![pos])
            } else {
                let mut dead = vec![vec![false; sorted.len()]; last_step];
                search(&sorted, rule, &consumed[r], &mut dead, last_step - 1, pos)
                    .map(|mut prefix| {
                        prefix.push(pos);
                        prefix
                    })
            };
            if let Some(chain) = chain {
                for &i in &chain {
                    consumed[r][i] = true;
                }
                let members: Vec<&SimpleEvent> = chain.iter().map(|&i| sorted[i]).collect();
                out.push(DerivedEvent::from_chain(rule, &members).expect("chain length equals step count"));
            }
        }
    }
    out
}

/// Latest chain for steps `0..=step` whose last member admits `successor`.
///
/// `dead[step][j]` records candidates already shown to have no chain.
fn search(
    sorted: &[&SimpleEvent],
    rule: &EventRule,
    consumed: &[bool],
    dead: &mut [Vec<bool>],
    step: usize,
    successor: usize,
) -> Option<Vec<usize>> {
    let succ_ts = sorted[successor].acp_ts.as_micros();
    let ttl = rule.steps[step].ttl.as_micros();
    for j in (0..successor).rev() {
        if consumed[j] || dead[step][j] {
            continue;
        }
        let ts = sorted[j].acp_ts.as_micros();
        // Closed window [ts, ts + ttl], checked on raw integers.
        if !(ts <= succ_ts && succ_ts <= ts + ttl) {
            continue;
        }
        if !rule.steps[step].matches(sorted[j]) {
            continue;
        }
        if step == 0 {
            return Some(vec![j]);
        }
        match search(sorted, rule, consumed, dead, step - 1, j) {
            Some(mut prefix) => {
                prefix.push(j);
                return Some(prefix);
            }
            None => dead[step][j] = true,
        }
    }
    None
}
