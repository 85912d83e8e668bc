// SPDX-License-Identifier: Apache-2.0

//! Reference detection over traces, and the streaming-vs-reference sweep.

use std::collections::HashMap;
use std::time::Instant;

use acp_core::par::{self, ExecMode};
use acp_core::streamproc::RuleEngine;
use acp_model::{DerivedEvent, RuleFile, SensorMetadataRecord};
use acp_oracle::trace::random_case;
use serde::Serialize;

use crate::error::Result;
use crate::trace::{trace_readings, Trace};

/// Thresholds then rules over the whole trace. With `sensors`, readings
/// first take their type and parent crate from the matching record.
pub fn oracle_derive(trace: &Trace, rules: &RuleFile, sensors: Option<&[SensorMetadataRecord]>) -> Result<Vec<DerivedEvent>> {
    let mut readings = trace_readings(trace)?;
    if let Some(sensors) = sensors {
        let by_id: HashMap<&str, &SensorMetadataRecord> = sensors.iter().map(|s| (s.acp_id.as_str(), s)).collect();
        for r in &mut readings {
            if let Some(s) = by_id.get(r.acp_id.as_str()) {
                r.acp_type = Some(s.acp_type.clone());
                r.parent_crate_id = s.parent_crate_id().map(str::to_string);
            }
        }
    }
    let events = acp_oracle::simple_events(&readings, &rules.thresholds);
    Ok(acp_oracle::derive(&events, &rules.rules))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub seed: u64,
    pub events: usize,
    pub rules: usize,
    pub derived: usize,
    /// First difference, if any.
    pub mismatch: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub cases: Vec<CaseResult>,
    pub elapsed_s: f64,
}

impl SweepReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &CaseResult> {
        self.cases.iter().filter(|c| c.mismatch.is_some())
    }
}

pub const CONFIDENCE_TOLERANCE: f64 = 1e-12;

/// Runs each seeded random case through the streaming engine and the
/// reference detector; cases run in parallel under [`ExecMode::Parallel`].
pub fn sweep(seeds: Vec<u64>, mode: ExecMode) -> SweepReport {
    let started = Instant::now();
    let cases = par::map_owned(seeds, mode, run_case);
    SweepReport { cases, elapsed_s: started.elapsed().as_secs_f64() }
}

pub fn run_case(seed: u64) -> CaseResult {
    let case = random_case(seed);
    let mut engine = RuleEngine::new(case.rules.clone());
    let streamed: Vec<DerivedEvent> = case.events.iter().flat_map(|e| engine.process(e.clone())).collect();
    let reference = acp_oracle::derive(&case.events, &case.rules);
    CaseResult {
        seed,
        events: case.events.len(),
        rules: case.rules.len(),
        derived: reference.len(),
        mismatch: compare(&streamed, &reference),
    }
}

/// Field-by-field comparison; confidences within [`CONFIDENCE_TOLERANCE`].
pub fn compare(got: &[DerivedEvent], want: &[DerivedEvent]) -> Option<String> {
    if got.len() != want.len() {
        return Some(format!("{} derived events, expected {}", got.len(), want.len()));
    }
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        if g.rule_id != w.rule_id || g.constituents != w.constituents {
            return Some(format!("event {i}: {} {:?} vs {} {:?}", g.rule_id, g.constituents, w.rule_id, w.constituents));
        }
        if g.acp_ts != w.acp_ts || g.timeliness != w.timeliness {
            return Some(format!("event {i}: timestamps differ"));
        }
        if (g.acp_confidence - w.acp_confidence).abs() > CONFIDENCE_TOLERANCE {
            return Some(format!("event {i}: confidence {} vs {}", g.acp_confidence, w.acp_confidence));
        }
    }
    None
}
