// SPDX-License-Identifier: Apache-2.0

use serde::{Serialize, Serializer};

/// Largest magnitude below which an integral `f64` is written without a fraction.
const INTEGRAL_LIMIT: f64 = 9_007_199_254_740_992.0;

/// Number that serializes integral values as JSON integers (`415`, not `415.0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.fract() == 0.0 && self.0.abs() < INTEGRAL_LIMIT {
            s.serialize_i64(self.0 as i64)
        } else {
            s.serialize_f64(self.0)
        }
    }
}

/// Numeric view of a JSON value.
pub fn as_number(value: &serde_json::Value) -> Option<f64> {
    value.as_f64()
}

/// JSON value for a number, integral where possible.
pub fn number_value(v: f64) -> serde_json::Value {
    serde_json::to_value(Num(v)).unwrap_or(serde_json::Value::Null)
}
