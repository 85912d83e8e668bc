// SPDX-License-Identifier: Apache-2.0

//! Building-monitoring pipeline: message intake and raw archiving, stream
//! processing into simple and derived events, duplicated file storage with
//! an indexed metadata store, a read-only HTTP API and websocket push.

pub mod api;
pub mod config;
pub mod ingest;
pub mod par;
pub mod pipeline;
pub mod rtmonitor;
pub mod seed;
pub mod server;
pub mod store;
pub mod streamproc;

pub use config::Config;
pub use par::ExecMode;
