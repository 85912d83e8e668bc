// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid timestamp in field `{field}`: {text:?}")]
    InvalidTimestamp { field: String, text: String },

    #[error("invalid location: {0}")]
    InvalidLocation(String),

    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown field selector `{0}`")]
    UnknownField(String),

    #[error("invalid rule: {0}")]
    InvalidRule(String),

    #[error("invalid reading: {0}")]
    InvalidReading(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
