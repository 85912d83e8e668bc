// SPDX-License-Identifier: Apache-2.0

//! Microsecond epoch timestamps with the `"<secs>.<6 digits>"` wire form.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ModelError, Result};

const MICROS_PER_SEC: u64 = 1_000_000;

/// UTC microseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const EPOCH: Timestamp = Timestamp(0);

    pub const fn from_micros(micros: u64) -> Self {
        Timestamp(micros)
    }

    pub const fn from_secs(secs: u64) -> Self {
        Timestamp(secs * MICROS_PER_SEC)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    /// Current wall-clock time.
    pub fn now() -> Self {
        let now = Utc::now();
        Timestamp(now.timestamp_micros().max(0) as u64)
    }

    /// Parses the wire form, naming `acp_ts` in any error.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_field(text, "acp_ts")
    }

    /// Parses `^\d+(\.\d{1,6})?$`; `field` is reported on failure.
    pub fn parse_field(text: &str, field: &str) -> Result<Self> {
        let err = || ModelError::InvalidTimestamp {
            field: field.to_string(),
            text: text.to_string(),
        };
        let (secs, frac) = match text.split_once('.') {
            Some((s, f)) => (s, Some(f)),
            None => (text, None),
        };
        if secs.is_empty() || !secs.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let secs: u64 = secs.parse().map_err(|_| err())?;
        let micros = match frac {
            None => 0,
            Some(f) => {
                if f.is_empty() || f.len() > 6 || !f.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(err());
                }
                let digits: u64 = f.parse().map_err(|_| err())?;
                digits * 10u64.pow(6 - f.len() as u32)
            }
        };
        secs.checked_mul(MICROS_PER_SEC)
            .and_then(|v| v.checked_add(micros))
            .map(Timestamp)
            .ok_or_else(err)
    }

    pub fn saturating_add_micros(self, micros: u64) -> Self {
        Timestamp(self.0.saturating_add(micros))
    }

    pub fn saturating_sub_micros(self, micros: u64) -> Self {
        Timestamp(self.0.saturating_sub(micros))
    }

    /// UTC calendar date as `YYYY-MM-DD`, the partition key for file storage.
    pub fn date_string(self) -> String {
        self.datetime().format("%Y-%m-%d").to_string()
    }

    pub fn datetime(self) -> DateTime<Utc> {
        DateTime::<Utc>::from_timestamp_micros(self.0 as i64).unwrap_or(DateTime::<Utc>::UNIX_EPOCH)
    }

    /// Start of the UTC day containing this instant.
    pub fn day_start(self) -> Self {
        let day = 86_400 * MICROS_PER_SEC;
        Timestamp(self.0 - self.0 % day)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / MICROS_PER_SEC, self.0 % MICROS_PER_SEC)
    }
}

impl FromStr for Timestamp {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Timestamp::parse(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

struct TimestampVisitor;

impl<'de> Visitor<'de> for TimestampVisitor {
    type Value = Timestamp;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("epoch seconds as a decimal string or number")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Timestamp, E> {
        Timestamp::parse(v).map_err(E::custom)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Timestamp, E> {
        v.checked_mul(MICROS_PER_SEC)
            .map(Timestamp)
            .ok_or_else(|| E::custom("timestamp out of range"))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Timestamp, E> {
        if v < 0 {
            return Err(E::custom("negative timestamp"));
        }
        self.visit_u64(v as u64)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Timestamp, E> {
        if !v.is_finite() || v < 0.0 {
            return Err(E::custom("timestamp must be finite and non-negative"));
        }
        Ok(Timestamp((v * MICROS_PER_SEC as f64).round() as u64))
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        deserializer.deserialize_any(TimestampVisitor)
    }
}
