// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::sync::Arc;

use acp_model::{Features, SensorReading, Timestamp};
use serde_json::Value;

use super::RawEnvelope;

/// Turns one raw payload into a reading. Errors carry the quarantine reason.
pub trait Decoder: Send + Sync {
    fn decode(&self, envelope: &RawEnvelope) -> Result<SensorReading, String>;
}

/// Decoders keyed by sensor type, with a JSON fallback.
#[derive(Clone)]
pub struct DecoderRegistry {
    by_type: HashMap<String, Arc<dyn Decoder>>,
    default: Arc<dyn Decoder>,
}

impl Default for DecoderRegistry {
    fn default() -> Self {
        DecoderRegistry { by_type: HashMap::new(), default: Arc::new(JsonDecoder) }
    }
}

impl std::fmt::Debug for DecoderRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut types: Vec<_> = self.by_type.keys().collect();
        types.sort();
        f.debug_struct("DecoderRegistry").field("types", &types).finish()
    }
}

impl DecoderRegistry {
    pub fn register(&mut self, acp_type: impl Into<String>, decoder: Arc<dyn Decoder>) {
        self.by_type.insert(acp_type.into(), decoder);
    }

    pub fn decoder_for(&self, acp_type: Option<&str>) -> &dyn Decoder {
        acp_type
            .and_then(|t| self.by_type.get(t))
            .unwrap_or(&self.default)
            .as_ref()
    }
}

/// Sensor id embedded in a topic of the form `<prefix>/<acp_id>/<suffix>`.
pub fn acp_id_from_topic(topic: &str) -> Option<&str> {
    let parts: Vec<&str> = topic.split('/').collect();
    (parts.len() >= 3 && !parts[1].is_empty() && !parts[1].contains(['+', '#'])).then(|| parts[1])
}

/// Pass-through decoder for payloads already shaped as readings:
/// `{"acp_id", "acp_ts"?, "features": {...}}`. Other top-level keys are
/// ignored. A missing `acp_id` is taken from the topic and a missing
/// `acp_ts` from the arrival time.
#[derive(Debug, Default, Clone, Copy)]
pub struct JsonDecoder;

impl Decoder for JsonDecoder {
    fn decode(&self, envelope: &RawEnvelope) -> Result<SensorReading, String> {
        let text = std::str::from_utf8(&envelope.payload).map_err(|_| "invalid utf-8".to_string())?;
        let doc: Value = serde_json::from_str(text).map_err(|e| format!("invalid json: {e}"))?;
        let obj = doc.as_object().ok_or("payload is not a json object")?;

        let acp_id = match obj.get("acp_id") {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(_) => return Err("acp_id is not a non-empty string".into()),
            None => acp_id_from_topic(&envelope.topic)
                .ok_or("missing acp_id")?
                .to_string(),
        };
        let acp_ts = match obj.get("acp_ts") {
            None | Some(Value::Null) => envelope.arrival_ts,
            Some(v) => serde_json::from_value::<Timestamp>(v.clone()).map_err(|e| format!("bad acp_ts: {e}"))?,
        };
        let features: Features = match obj.get("features") {
            Some(v @ Value::Object(_)) => serde_json::from_value(v.clone()).map_err(|e| format!("bad features: {e}"))?,
            Some(_) => return Err("features is not an object".into()),
            None => return Err("missing features".into()),
        };
        let reading = SensorReading::new(acp_id, acp_ts, features);
        reading.validate().map_err(|e| match e {
            acp_model::ModelError::InvalidReading(why) => why,
            other => other.to_string(),
        })?;
        Ok(reading)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn env(topic: &str, payload: &[u8]) -> RawEnvelope {
        RawEnvelope {
            source: "test".into(),
            topic: topic.into(),
            payload: payload.to_vec(),
            arrival_ts: Timestamp::from_secs(1_700_000_000),
        }
    }

    #[test]
    fn reference_payload_decodes() {
        let r = JsonDecoder.decode(&env("acp/elsys-co2-041ba9/up", seed::REFERENCE_READING_JSON.as_bytes())).unwrap();
        assert_eq!(r.acp_id, "elsys-co2-041ba9");
        assert_eq!(r.features.get("co2"), Some(415.0));
        assert_eq!(r.features.len(), 6);
        assert_eq!(r.features.attributes["device"], "elsys_co2");
    }

    #[test]
    fn fallbacks_and_failures() {
        let r = JsonDecoder.decode(&env("acp/abc-def-000001/up", br#"{"features":{"co2":1}}"#)).unwrap();
        assert_eq!(r.acp_id, "abc-def-000001");
        assert_eq!(r.acp_ts, Timestamp::from_secs(1_700_000_000));

        let err = JsonDecoder.decode(&env("t", br#"{"acp_id":"x","features":{}}"#)).unwrap_err();
        assert_eq!(err, "empty features");
        assert_eq!(JsonDecoder.decode(&env("t", b"\xff\xfe")).unwrap_err(), "invalid utf-8");
        assert!(JsonDecoder.decode(&env("t", br#"{"features":{"a":1}}"#)).is_err());
    }

    #[test]
    fn topic_ids() {
        assert_eq!(acp_id_from_topic("acp/elsys-co2-041ba9/up"), Some("elsys-co2-041ba9"));
        assert_eq!(acp_id_from_topic("tcp_test"), None);
        assert_eq!(acp_id_from_topic("acp/+/up"), None);
    }
}
