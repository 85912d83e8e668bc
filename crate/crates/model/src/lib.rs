// SPDX-License-Identifier: Apache-2.0

//! Domain types shared by every part of the platform: building crates,
//! sensor metadata, readings, events and the rule vocabulary.

pub mod bim;
pub mod error;
pub mod event;
pub mod json;
pub mod location;
pub mod reading;
pub mod sensor;
pub mod timestamp;

pub use bim::{validate_crate, CrateLookup, CrateRecord, CrateType, ValidationReport, Violation};
pub use error::{ModelError, Result};
pub use event::{
    combine_confidence, timeliness_of, Comparator, DerivedEvent, EventRule, FieldSelector, FieldSource,
    FieldValue, Predicate, RuleFile, RuleStep, SimpleEvent, ThresholdSpec, TimelinessInterval, Ttl,
};
pub use location::{BoundaryPolygon, LocationRef, Position};
pub use reading::{Features, SensorReading};
pub use sensor::SensorMetadataRecord;
pub use timestamp::Timestamp;
