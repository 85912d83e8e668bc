// SPDX-License-Identifier: Apache-2.0

//! Events, timeliness intervals and the rule/threshold vocabulary.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{ModelError, Result};
use crate::json::Num;
use crate::reading::SensorReading;
use crate::timestamp::Timestamp;

/// Positive duration with microsecond resolution; `ttl_s` on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ttl(u64);

impl Ttl {
    pub fn from_secs_f64(secs: f64) -> Result<Self> {
        if !secs.is_finite() || secs <= 0.0 {
            return Err(ModelError::InvalidArgument(format!("ttl_s must be positive, got {secs}")));
        }
        let micros = (secs * 1e6).round();
        if micros < 1.0 || micros > u64::MAX as f64 {
            return Err(ModelError::InvalidArgument(format!("ttl_s {secs} out of range")));
        }
        Ok(Ttl(micros as u64))
    }

    pub fn from_micros(micros: u64) -> Result<Self> {
        if micros == 0 {
            return Err(ModelError::InvalidArgument("ttl must be positive".into()));
        }
        Ok(Ttl(micros))
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl Serialize for Ttl {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Num(self.as_secs_f64()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ttl {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let secs = f64::deserialize(d)?;
        Ttl::from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

/// Closed interval `[start, start + ttl]` during which an event is relevant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimelinessInterval {
    pub start: Timestamp,
    pub ttl: Ttl,
}

impl TimelinessInterval {
    pub fn end(&self) -> Timestamp {
        self.start.saturating_add_micros(self.ttl.as_micros())
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        self.start <= ts && ts <= self.end()
    }

    pub fn overlaps(&self, other: &TimelinessInterval) -> bool {
        self.start <= other.end() && other.start <= self.end()
    }
}

pub fn timeliness_of(event_time: Timestamp, ttl_s: f64) -> Result<TimelinessInterval> {
    Ok(TimelinessInterval { start: event_time, ttl: Ttl::from_secs_f64(ttl_s)? })
}

impl Serialize for TimelinessInterval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(3))?;
        map.serialize_entry("start", &self.start)?;
        map.serialize_entry("end", &self.end())?;
        map.serialize_entry("ttl_s", &self.ttl)?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for TimelinessInterval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            start: Timestamp,
            ttl_s: Ttl,
            end: Option<Timestamp>,
        }
        let raw = Raw::deserialize(d)?;
        let interval = TimelinessInterval { start: raw.start, ttl: raw.ttl_s };
        if let Some(end) = raw.end {
            if end != interval.end() {
                return Err(serde::de::Error::custom("timeliness end disagrees with start + ttl_s"));
            }
        }
        Ok(interval)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            Comparator::Eq => ord == Equal,
            Comparator::Ne => ord != Equal,
            Comparator::Lt => ord == Less,
            Comparator::Le => ord != Greater,
            Comparator::Gt => ord == Greater,
            Comparator::Ge => ord != Less,
        }
    }

    pub fn compare_f64(self, lhs: f64, rhs: f64) -> bool {
        match lhs.partial_cmp(&rhs) {
            Some(ord) => self.holds(ord),
            None => self == Comparator::Ne,
        }
    }
}

impl FromStr for Comparator {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "==" => Comparator::Eq,
            "!=" => Comparator::Ne,
            "<" => Comparator::Lt,
            "<=" => Comparator::Le,
            ">" => Comparator::Gt,
            ">=" => Comparator::Ge,
            other => return Err(ModelError::InvalidArgument(format!("unknown comparator {other:?}"))),
        })
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Comparator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Comparator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Field addressed by a predicate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FieldSelector {
    AcpId,
    AcpType,
    AcpEvent,
    AcpEventValue,
    ParentCrateId,
    Feature(String),
}

impl FromStr for FieldSelector {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "acp_id" => FieldSelector::AcpId,
            "acp_type" => FieldSelector::AcpType,
            "acp_event" => FieldSelector::AcpEvent,
            "acp_event_value" => FieldSelector::AcpEventValue,
            "parent_crate_id" => FieldSelector::ParentCrateId,
            other => match other.strip_prefix("feature.") {
                Some(name) if !name.is_empty() => FieldSelector::Feature(name.to_string()),
                _ => return Err(ModelError::UnknownField(other.to_string())),
            },
        })
    }
}

impl fmt::Display for FieldSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSelector::AcpId => f.write_str("acp_id"),
            FieldSelector::AcpType => f.write_str("acp_type"),
            FieldSelector::AcpEvent => f.write_str("acp_event"),
            FieldSelector::AcpEventValue => f.write_str("acp_event_value"),
            FieldSelector::ParentCrateId => f.write_str("parent_crate_id"),
            FieldSelector::Feature(name) => write!(f, "feature.{name}"),
        }
    }
}

impl Serialize for FieldSelector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FieldSelector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldValue<'a> {
    Str(&'a str),
    Num(f64),
}

impl<'a> FieldValue<'a> {
    fn from_json(v: &'a Value) -> Option<Self> {
        match v {
            Value::String(s) => Some(FieldValue::Str(s)),
            Value::Number(n) => n.as_f64().map(FieldValue::Num),
            _ => None,
        }
    }
}

/// Anything predicates can be evaluated against.
pub trait FieldSource {
    fn field(&self, selector: &FieldSelector) -> Option<FieldValue<'_>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub field: FieldSelector,
    #[serde(alias = "comparator")]
    pub op: Comparator,
    pub value: Value,
}

impl Predicate {
    pub fn new(field: FieldSelector, op: Comparator, value: impl Into<Value>) -> Self {
        Predicate { field, op, value: value.into() }
    }

    /// Numbers compare numerically, strings lexically; a missing field or a
    /// type mismatch never matches.
    pub fn eval(&self, subject: &dyn FieldSource) -> bool {
        match (subject.field(&self.field), &self.value) {
            (Some(FieldValue::Num(lhs)), Value::Number(rhs)) => match rhs.as_f64() {
                Some(rhs) => self.op.compare_f64(lhs, rhs),
                None => false,
            },
            (Some(FieldValue::Str(lhs)), Value::String(rhs)) => self.op.holds(lhs.cmp(rhs.as_str())),
            _ => false,
        }
    }
}

pub fn all_match(predicates: &[Predicate], subject: &dyn FieldSource) -> bool {
    predicates.iter().all(|p| p.eval(subject))
}

impl FieldSource for SensorReading {
    fn field(&self, selector: &FieldSelector) -> Option<FieldValue<'_>> {
        match selector {
            FieldSelector::AcpId => Some(FieldValue::Str(&self.acp_id)),
            FieldSelector::AcpType => self.acp_type.as_deref().map(FieldValue::Str),
            FieldSelector::ParentCrateId => self.parent_crate_id.as_deref().map(FieldValue::Str),
            FieldSelector::Feature(name) => self.features.get(name).map(FieldValue::Num),
            FieldSelector::AcpEvent | FieldSelector::AcpEventValue => None,
        }
    }
}

/// Evaluates against a routed JSON document (reading or event).
impl FieldSource for Value {
    fn field(&self, selector: &FieldSelector) -> Option<FieldValue<'_>> {
        let v = match selector {
            FieldSelector::AcpId => self.get("acp_id"),
            FieldSelector::AcpType => self.get("acp_type"),
            FieldSelector::AcpEvent => self.get("acp_event"),
            FieldSelector::AcpEventValue => self.get("acp_event_value"),
            FieldSelector::ParentCrateId => self
                .get("parent_crate_id")
                .or_else(|| self.get("acp_location").and_then(|l| l.get("parent_crate_id"))),
            FieldSelector::Feature(name) => self.get("features").and_then(|f| f.get(name)),
        }?;
        FieldValue::from_json(v)
    }
}

/// Event raised by a single reading crossing a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimpleEvent {
    pub event_id: String,
    pub acp_id: String,
    pub acp_ts: Timestamp,
    pub acp_event: String,
    pub acp_event_value: Value,
    pub acp_confidence: f64,
    pub timeliness: TimelinessInterval,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acp_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_crate_id: Option<String>,
    /// Snapshot of the triggering reading's features, for rule predicates.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub source_features: BTreeMap<String, f64>,
}

impl SimpleEvent {
    /// The event `spec` (at position `index` in its list) raises for
    /// `reading`, if the reading crosses it.
    pub fn from_threshold(reading: &SensorReading, spec: &ThresholdSpec, index: usize) -> Option<Self> {
        if !spec.selects(reading) {
            return None;
        }
        let observed = reading.features.get(&spec.feature)?;
        if !spec.op.compare_f64(observed, spec.value) {
            return None;
        }
        Some(SimpleEvent {
            event_id: format!("{}:{}:{}", reading.acp_id, reading.acp_ts.as_micros(), index),
            acp_id: reading.acp_id.clone(),
            acp_ts: reading.acp_ts,
            acp_event: spec.event_name.clone(),
            acp_event_value: crate::json::number_value(observed),
            acp_confidence: spec.confidence,
            timeliness: TimelinessInterval { start: reading.acp_ts, ttl: spec.ttl_s },
            acp_type: reading.acp_type.clone(),
            parent_crate_id: reading.parent_crate_id.clone(),
            source_features: reading.features.values.clone(),
        })
    }
}

impl FieldSource for SimpleEvent {
    fn field(&self, selector: &FieldSelector) -> Option<FieldValue<'_>> {
        match selector {
            FieldSelector::AcpId => Some(FieldValue::Str(&self.acp_id)),
            FieldSelector::AcpType => self.acp_type.as_deref().map(FieldValue::Str),
            FieldSelector::AcpEvent => Some(FieldValue::Str(&self.acp_event)),
            FieldSelector::AcpEventValue => FieldValue::from_json(&self.acp_event_value),
            FieldSelector::ParentCrateId => self.parent_crate_id.as_deref().map(FieldValue::Str),
            FieldSelector::Feature(name) => self.source_features.get(name).copied().map(FieldValue::Num),
        }
    }
}

/// Event recognised from an ordered chain of simple events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedEvent {
    pub event_id: String,
    pub rule_id: String,
    pub acp_event: String,
    pub acp_event_value: Value,
    pub acp_ts: Timestamp,
    pub acp_confidence: f64,
    pub constituents: Vec<String>,
    pub timeliness: TimelinessInterval,
}

impl DerivedEvent {
    /// Builds the derived event for a completed chain, one event per rule step.
    pub fn from_chain(rule: &EventRule, chain: &[&SimpleEvent]) -> Result<Self> {
        if chain.len() != rule.steps.len() || chain.is_empty() {
            return Err(ModelError::InvalidArgument(format!(
                "rule {} has {} steps, chain has {} events",
                rule.rule_id,
                rule.steps.len(),
                chain.len()
            )));
        }
        let last = chain[chain.len() - 1];
        let ttl = rule.steps[rule.steps.len() - 1].ttl;
        Ok(DerivedEvent {
            event_id: format!("{}:{}", rule.rule_id, last.event_id),
            rule_id: rule.rule_id.clone(),
            acp_event: rule.derived_type.clone(),
            acp_event_value: Value::String(rule.render_value(chain)),
            acp_ts: last.acp_ts,
            acp_confidence: combine_confidence(chain.iter().map(|e| e.acp_confidence)),
            constituents: chain.iter().map(|e| e.event_id.clone()).collect(),
            timeliness: TimelinessInterval { start: last.acp_ts, ttl },
        })
    }
}

impl FieldSource for DerivedEvent {
    fn field(&self, selector: &FieldSelector) -> Option<FieldValue<'_>> {
        match selector {
            FieldSelector::AcpEvent => Some(FieldValue::Str(&self.acp_event)),
            FieldSelector::AcpEventValue => FieldValue::from_json(&self.acp_event_value),
            _ => None,
        }
    }
}

/// Product of confidences, clamped to `[0, 1]`, multiplied in chain order.
pub fn combine_confidence(confidences: impl IntoIterator<Item = f64>) -> f64 {
    confidences.into_iter().fold(1.0, |acc, c| acc * c).clamp(0.0, 1.0)
}

/// A step's `match` is one predicate or a conjunction of them.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleStep {
    pub predicates: Vec<Predicate>,
    pub ttl: Ttl,
}

impl RuleStep {
    pub fn matches(&self, event: &SimpleEvent) -> bool {
        all_match(&self.predicates, event)
    }
}

impl Serialize for RuleStep {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(2))?;
        if self.predicates.len() == 1 {
            map.serialize_entry("match", &self.predicates[0])?;
        } else {
            map.serialize_entry("match", &self.predicates)?;
        }
        map.serialize_entry("ttl_s", &self.ttl)?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for RuleStep {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            One(Predicate),
            Many(Vec<Predicate>),
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            #[serde(rename = "match")]
            matcher: OneOrMany,
            ttl_s: Ttl,
        }
        let raw = Raw::deserialize(d)?;
        let predicates = match raw.matcher {
            OneOrMany::One(p) => vec![p],
            OneOrMany::Many(ps) => ps,
        };
        Ok(RuleStep { predicates, ttl: raw.ttl_s })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRule {
    pub rule_id: String,
    pub derived_type: String,
    #[serde(default)]
    pub value_template: String,
    pub steps: Vec<RuleStep>,
}

impl EventRule {
    pub fn validate(&self) -> Result<()> {
        if self.rule_id.is_empty() {
            return Err(ModelError::InvalidRule("empty rule_id".into()));
        }
        if self.steps.is_empty() {
            return Err(ModelError::InvalidRule(format!("{}: rule needs at least one step", self.rule_id)));
        }
        if self.steps.iter().any(|s| s.predicates.is_empty()) {
            return Err(ModelError::InvalidRule(format!("{}: step with empty match", self.rule_id)));
        }
        Ok(())
    }

    /// Sum of step ttls; how far back a chain completing now can reach.
    pub fn window_micros(&self) -> u64 {
        self.steps.iter().map(|s| s.ttl.as_micros()).sum()
    }

    /// Expands `{rule_id}`, `{derived_type}`, `{count}`, `{first_acp_id}` and
    /// `{last_acp_id}`; an empty template yields the derived type.
    pub fn render_value(&self, chain: &[&SimpleEvent]) -> String {
        if self.value_template.is_empty() {
            return self.derived_type.clone();
        }
        let first = chain.first().map(|e| e.acp_id.as_str()).unwrap_or("");
        let last = chain.last().map(|e| e.acp_id.as_str()).unwrap_or("");
        self.value_template
            .replace("{rule_id}", &self.rule_id)
            .replace("{derived_type}", &self.derived_type)
            .replace("{count}", &chain.len().to_string())
            .replace("{first_acp_id}", first)
            .replace("{last_acp_id}", last)
    }
}

/// Raises a simple event when a reading's feature crosses a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acp_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acp_id: Option<String>,
    pub feature: String,
    #[serde(alias = "comparator")]
    pub op: Comparator,
    pub value: f64,
    pub event_name: String,
    pub ttl_s: Ttl,
    #[serde(default = "full_confidence")]
    pub confidence: f64,
}

fn full_confidence() -> f64 {
    1.0
}

impl ThresholdSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(ModelError::InvalidRule(format!(
                "threshold {}: confidence {} outside [0, 1]",
                self.event_name, self.confidence
            )));
        }
        if self.event_name.is_empty() || self.feature.is_empty() {
            return Err(ModelError::InvalidRule("threshold needs feature and event_name".into()));
        }
        Ok(())
    }

    /// Whether the spec's sensor selector admits this reading.
    pub fn selects(&self, reading: &SensorReading) -> bool {
        self.acp_id.as_deref().is_none_or(|id| id == reading.acp_id)
            && self
                .acp_type
                .as_deref()
                .is_none_or(|t| reading.acp_type.as_deref() == Some(t))
    }
}

/// Rules and thresholds loaded together from one JSON document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleFile {
    #[serde(default)]
    pub rules: Vec<EventRule>,
    #[serde(default)]
    pub thresholds: Vec<ThresholdSpec>,
}

impl RuleFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: RuleFile =
            serde_json::from_str(text).map_err(|e| ModelError::InvalidRule(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for rule in &self.rules {
            rule.validate()?;
            if !ids.insert(rule.rule_id.as_str()) {
                return Err(ModelError::InvalidRule(format!("duplicate rule_id {}", rule.rule_id)));
            }
        }
        self.thresholds.iter().try_for_each(ThresholdSpec::validate)
    }
}
