// SPDX-License-Identifier: Apache-2.0

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

use acp_model::{DerivedEvent, EventRule, SimpleEvent, Timestamp};

/// Ordering key: timestamp, then arrival sequence.
type Key = (Timestamp, u64);

#[derive(Debug, Clone)]
struct Candidate {
    key: Key,
    event: Arc<SimpleEvent>,
}

#[derive(Debug)]
struct RuleState {
    rule: EventRule,
    /// `steps[i]` holds unconsumed events matching step `i`, sorted by key.
    /// The final step keeps no candidates.
    steps: Vec<VecDeque<Candidate>>,
    /// `horizon[i]`: how far past a step-`i` candidate the completing event
    /// may lie (sum of ttls of steps `i..n-1`, excluding the last).
    horizon: Vec<u64>,
}

impl RuleState {
    fn new(rule: EventRule) -> Self {
        let n = rule.steps.len();
        let mut horizon = vec![0u64; n];
        for i in (0..n.saturating_sub(1)).rev() {
            horizon[i] = horizon[i + 1] + rule.steps[i].ttl.as_micros();
        }
        RuleState { steps: vec![VecDeque::new(); n.saturating_sub(1)], horizon, rule }
    }

    fn prune(&mut self, max_seen: Timestamp) {
        for (i, deque) in self.steps.iter_mut().enumerate() {
            let reach = self.horizon[i];
            while let Some(front) = deque.front() {
                if front.key.0.as_micros().saturating_add(reach) < max_seen.as_micros() {
                    deque.pop_front();
                } else {
                    break;
                }
            }
        }
    }

    /// Latest chain for steps `0..=step` whose last member admits `succ`.
    fn search(&self, step: usize, succ: Key, dead: &mut HashSet<(usize, u64)>) -> Option<Vec<Candidate>> {
        let ttl = self.rule.steps[step].ttl.as_micros();
        let succ_ts = succ.0.as_micros();
        for cand in self.steps[step].iter().rev() {
            if cand.key >= succ {
                continue;
            }
            let ts = cand.key.0.as_micros();
            if ts.saturating_add(ttl) < succ_ts {
                // Deque is key-ordered: everything earlier is out of reach too.
                break;
            }
            if dead.contains(&(step, cand.key.1)) {
                continue;
            }
            if step == 0 {
                return Some(vec![cand.clone()]);
            }
            match self.search(step - 1, cand.key, dead) {
                Some(mut chain) => {
                    chain.push(cand.clone());
                    return Some(chain);
                }
                None => {
                    dead.insert((step, cand.key.1));
                }
            }
        }
        None
    }

    fn consume(&mut self, seq: u64) {
        for deque in &mut self.steps {
            deque.retain(|c| c.key.1 != seq);
        }
    }

    fn store(&mut self, cand: &Candidate) {
        let n = self.rule.steps.len();
        for i in 0..n - 1 {
            if self.rule.steps[i].matches(&cand.event) {
                let deque = &mut self.steps[i];
                let pos = deque.partition_point(|c| c.key <= cand.key);
                deque.insert(pos, cand.clone());
            }
        }
    }
}

/// Incremental derived-event detection over a stream of simple events.
///
/// For each incoming event and each rule (in rule order): if the event
/// satisfies the rule's final step, the stored candidates are searched for
/// the latest chain in which every event lies inside its predecessor's
/// timeliness window, backtracking past dead ends. A completed chain is
/// emitted and its members are removed from that rule's state; otherwise
/// the event is stored for every earlier step it satisfies.
///
/// Events are expected in non-decreasing `acp_ts` order. Late events are
/// still placed by timestamp, but those older than the longest rule window
/// behind the newest timestamp seen are ignored and counted.
#[derive(Debug)]
pub struct RuleEngine {
    rules: Vec<RuleState>,
    seq: u64,
    max_seen: Option<Timestamp>,
    retention: u64,
    ignored: u64,
}

impl RuleEngine {
    pub fn new(rules: Vec<EventRule>) -> Self {
        let retention = rules.iter().map(EventRule::window_micros).max().unwrap_or(0);
        RuleEngine {
            rules: rules.into_iter().map(RuleState::new).collect(),
            seq: 0,
            max_seen: None,
            retention,
            ignored: 0,
        }
    }

    pub fn process(&mut self, event: SimpleEvent) -> Vec<DerivedEvent> {
        let ts = event.acp_ts;
        if let Some(max) = self.max_seen {
            if ts.as_micros().saturating_add(self.retention) < max.as_micros() {
                self.ignored += 1;
                return Vec::new();
            }
        }
        let max_seen = self.max_seen.map_or(ts, |m| m.max(ts));
        self.max_seen = Some(max_seen);
        let key = (ts, self.seq);
        self.seq += 1;
        let cand = Candidate { key, event: Arc::new(event) };

        let mut out = Vec::new();
        for state in &mut self.rules {
            state.prune(max_seen);
            let last = state.rule.steps.len() - 1;
            let completed = if state.rule.steps[last].matches(&cand.event) {
                if last == 0 {
                    Some(Vec::new())
                } else {
                    state.search(last - 1, key, &mut HashSet::new())
                }
            } else {
                None
            };
            match completed {
                Some(prefix) => {
                    let mut chain: Vec<&SimpleEvent> = prefix.iter().map(|c| c.event.as_ref()).collect();
                    chain.push(&cand.event);
                    out.push(DerivedEvent::from_chain(&state.rule, &chain).expect("chain length equals step count"));
                    for c in &prefix {
                        state.consume(c.key.1);
                    }
                }
                None => state.store(&cand),
            }
        }
        out
    }

    /// Out-of-order events dropped because they fell behind the retention window.
    pub fn ignored(&self) -> u64 {
        self.ignored
    }

    pub fn max_seen(&self) -> Option<Timestamp> {
        self.max_seen
    }

    /// Largest total window over all rules, in microseconds.
    pub fn retention_micros(&self) -> u64 {
        self.retention
    }

    /// Number of stored candidates, counting an event once per step it fills.
    pub fn state_len(&self) -> usize {
        self.rules.iter().flat_map(|r| &r.steps).map(VecDeque::len).sum()
    }

    /// Every stored candidate as `(rule_id, step, event)`.
    pub fn candidates(&self) -> impl Iterator<Item = (&str, usize, &SimpleEvent)> {
        self.rules.iter().flat_map(|r| {
            r.steps
                .iter()
                .enumerate()
                .flat_map(move |(i, d)| d.iter().map(move |c| (r.rule.rule_id.as_str(), i, c.event.as_ref())))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use acp_model::{Comparator, FieldSelector, Predicate, RuleStep, TimelinessInterval, Ttl};
    use serde_json::json;

    fn ev(id: &str, acp_id: &str, secs: &str, conf: f64) -> SimpleEvent {
        let ts = Timestamp::parse(secs).unwrap();
        SimpleEvent {
            event_id: id.into(),
            acp_id: acp_id.into(),
            acp_ts: ts,
            acp_event: "motion".into(),
            acp_event_value: json!(1),
            acp_confidence: conf,
            timeliness: TimelinessInterval { start: ts, ttl: Ttl::from_secs_f64(10.0).unwrap() },
            acp_type: None,
            parent_crate_id: None,
            source_features: [("motion".to_string(), 1.0)].into(),
        }
    }

    fn step(acp_id: &str, ttl: f64) -> RuleStep {
        RuleStep {
            predicates: vec![
                Predicate::new(FieldSelector::AcpId, Comparator::Eq, acp_id),
                Predicate::new(FieldSelector::Feature("motion".into()), Comparator::Gt, 0),
            ],
            ttl: Ttl::from_secs_f64(ttl).unwrap(),
        }
    }

    fn rule(id: &str, steps: Vec<RuleStep>) -> EventRule {
        EventRule { rule_id: id.into(), derived_type: "walkthrough".into(), value_template: String::new(), steps }
    }

    fn run(rules: Vec<EventRule>, events: Vec<SimpleEvent>) -> (Vec<DerivedEvent>, RuleEngine) {
        let mut engine = RuleEngine::new(rules);
        let out = events.into_iter().flat_map(|e| engine.process(e)).collect::<Vec<_>>();
        (out, engine)
    }

    #[test]
    fn pair_within_window() {
        let (out, _) = run(
            vec![rule("bc", vec![step("B", 10.0), step("C", 10.0)])],
            vec![ev("b", "B", "100", 0.9), ev("c", "C", "105", 0.8)],
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].constituents, ["b", "c"]);
        assert_eq!(out[0].event_id, "bc:c");
        assert!((out[0].acp_confidence - 0.72).abs() < 1e-12);
        assert_eq!(out[0].timeliness.end(), Timestamp::from_secs(115));
    }

    #[test]
    fn window_is_closed() {
        let bc = || vec![rule("bc", vec![step("B", 10.0), step("C", 10.0)])];
        let (edge, _) = run(bc(), vec![ev("b", "B", "100", 1.0), ev("c", "C", "110", 1.0)]);
        assert_eq!(edge.len(), 1);
        let (past, _) = run(bc(), vec![ev("b", "B", "100", 1.0), ev("c", "C", "110.000001", 1.0)]);
        assert!(past.is_empty());
    }

    #[test]
    fn latest_predecessor_and_consumption() {
        let (out, engine) = run(
            vec![rule("bc", vec![step("B", 10.0), step("C", 10.0)])],
            vec![ev("b1", "B", "100", 1.0), ev("b2", "B", "104", 1.0), ev("c1", "C", "105", 1.0), ev("c2", "C", "106", 1.0)],
        );
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].constituents, ["b2", "c1"]);
        assert_eq!(out[1].constituents, ["b1", "c2"]);
        assert_eq!(engine.state_len(), 0);
    }

    #[test]
    fn backtracks_past_dead_end() {
        let (out, _) = run(
            vec![rule("abc", vec![step("A", 2.0), step("B", 10.0), step("C", 10.0)])],
            vec![ev("a", "A", "100", 1.0), ev("b1", "B", "101", 1.0), ev("b2", "B", "105", 1.0), ev("c", "C", "106", 1.0)],
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].constituents, ["a", "b1", "c"]);
    }

    #[test]
    fn stale_candidates_pruned_and_late_events_ignored() {
        let (out, mut engine) = run(
            vec![rule("bc", vec![step("B", 10.0), step("C", 10.0)])],
            vec![ev("b", "B", "100", 1.0), ev("x", "X", "200", 1.0), ev("c", "C", "200", 1.0)],
        );
        assert!(out.is_empty());
        assert_eq!(engine.state_len(), 0);
        engine.process(ev("late", "B", "150", 1.0));
        assert_eq!(engine.ignored(), 1);
        engine.process(ev("ok", "B", "185", 1.0));
        assert_eq!(engine.ignored(), 1);
    }

    #[test]
    fn single_step_rule_fires_on_every_match() {
        let (out, _) = run(vec![rule("b", vec![step("B", 1.0)])], vec![ev("b1", "B", "1", 0.5), ev("b2", "B", "2", 0.5)]);
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].constituents, ["b2"]);
    }
}
