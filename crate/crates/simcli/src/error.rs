// SPDX-License-Identifier: Apache-2.0

/// Failures mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("regression: {0}")]
    Regression(String),
}

impl SimError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Usage(_) => 1,
            SimError::Runtime(_) => 2,
            SimError::Regression(_) => 3,
        }
    }

    pub(crate) fn runtime(context: &str, err: impl std::fmt::Display) -> Self {
        SimError::Runtime(format!("{context}: {err}"))
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
