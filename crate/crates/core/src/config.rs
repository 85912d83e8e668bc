// SPDX-License-Identifier: Apache-2.0

//! Structured configuration shared by the server and the simulator.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root of the file repository (`raw/`, `day/`, `sensor/`, `meta/`, ...).
    pub data_dir: PathBuf,
    pub server: ServerConfig,
    pub ingest: IngestConfig,
    pub rules: RulesConfig,
    pub rtmonitor: RtMonitorConfig,
    pub svg: SvgConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data_dir: PathBuf::from("data"),
            server: ServerConfig::default(),
            ingest: IngestConfig::default(),
            rules: RulesConfig::default(),
            rtmonitor: RtMonitorConfig::default(),
            svg: SvgConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Loopback config on ephemeral ports rooted at `data_dir`; used by tests
    /// and the latency harness.
    pub fn ephemeral(data_dir: impl Into<PathBuf>) -> Self {
        Config {
            data_dir: data_dir.into(),
            server: ServerConfig {
                listen: "127.0.0.1:0".parse().unwrap(),
                ..ServerConfig::default()
            },
            ingest: IngestConfig {
                tcp_test: Some("127.0.0.1:0".parse().unwrap()),
                ..IngestConfig::default()
            },
            ..Config::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub api_prefix: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: "127.0.0.1:8080".parse().unwrap(),
            api_prefix: "/api".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub mqtt: Option<MqttConfig>,
    pub tcp_test: Option<SocketAddr>,
    pub queue_capacity: usize,
    pub max_payload_bytes: usize,
    /// Upper bound on readings handed to one parallel detection batch.
    pub batch_size: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            mqtt: None,
            tcp_test: None,
            queue_capacity: 10_000,
            max_payload_bytes: 256 * 1024,
            batch_size: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MqttConfig {
    /// `host:port` of the broker.
    pub broker: String,
    pub topic: String,
    #[serde(default = "default_client_id")]
    pub client_id: String,
}

fn default_client_id() -> String {
    "acp-ingest".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesConfig {
    /// JSON rule file; no file means no thresholds and no rules.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RtMonitorConfig {
    /// Frames buffered per client before it is disconnected.
    pub buffer: usize,
    pub ping_interval_s: f64,
    pub max_missed_pongs: u32,
}

impl Default for RtMonitorConfig {
    fn default() -> Self {
        RtMonitorConfig {
            buffer: 1_000,
            ping_interval_s: 30.0,
            max_missed_pongs: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvgConfig {
    pub scale: f64,
}

impl Default for SvgConfig {
    fn default() -> Self {
        SvgConfig { scale: 6.608 }
    }
}
