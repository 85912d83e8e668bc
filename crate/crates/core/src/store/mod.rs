// SPDX-License-Identifier: Apache-2.0

//! Persistence: indexed crate/sensor metadata and the file-based readings
//! repository (one copy per day, one copy per sensor and day).

mod meta;
mod readings;

pub use meta::{CrateTree, MetadataStore};
pub use readings::{DuplicationReport, ReadingsRepository};

use acp_model::ValidationReport;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{kind} not found: {id}")]
    NotFound { kind: &'static str, id: String },

    #[error("rejected {id}: {report}")]
    Rejected { id: String, report: ValidationReport },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl StoreError {
    pub(crate) fn not_found(kind: &'static str, id: &str) -> Self {
        StoreError::NotFound { kind, id: id.to_string() }
    }
}

/// Directory-safe form of an identifier: anything outside
/// `[A-Za-z0-9-]` becomes `_`.
pub fn sanitize_component(raw: &str) -> String {
    let s: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitizes_topics_and_ids() {
        assert_eq!(sanitize_component("acp/elsys-co2-041ba9/up"), "acp_elsys-co2-041ba9_up");
        assert_eq!(sanitize_component("../etc"), "___etc");
        assert_eq!(sanitize_component(""), "_");
    }
}
