// SPDX-License-Identifier: Apache-2.0

//! Simulation and measurement harness: synthetic fleets and traces, trace
//! replay over the TCP intake channel, reference derived-event detection,
//! and end-to-end latency measurement through the websocket push path.

pub mod cli;
pub mod detect;
pub mod error;
pub mod fleet;
pub mod latency;
pub mod replay;
pub mod trace;

pub use error::SimError;
