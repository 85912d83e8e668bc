// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::RwLock;
use rumqttc::{AsyncClient, Event, MqttOptions, Packet, QoS};
use serde::Serialize;
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;

use super::{Ingestor, RawEnvelope};
use crate::config::{IngestConfig, MqttConfig};

pub const TCP_SOURCE: &str = "tcp_test";
pub const MQTT_SOURCE: &str = "mqtt";

#[derive(Debug, thiserror::Error)]
pub enum IntakeError {
    #[error("no intake channel configured")]
    NoChannels,
    #[error("bad broker address {0:?}")]
    BadBroker(String),
    #[error("binding test channel on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ChannelHealth {
    pub live: bool,
    pub detail: String,
    pub failures: u64,
}

type HealthMap = Arc<RwLock<BTreeMap<String, ChannelHealth>>>;

#[derive(Debug)]
pub struct IntakeHandle {
    health: HealthMap,
    tasks: Vec<JoinHandle<()>>,
    tcp_addr: Option<SocketAddr>,
}

impl IntakeHandle {
    pub fn health(&self) -> BTreeMap<String, ChannelHealth> {
        self.health.read().clone()
    }

    /// Bound address of the TCP test channel, if configured.
    pub fn tcp_addr(&self) -> Option<SocketAddr> {
        self.tcp_addr
    }

    pub fn shutdown(&self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

impl Drop for IntakeHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Retry delay after `attempt` consecutive failures: 1 s doubling, capped at 60 s.
pub fn backoff_delay(attempt: u32) -> Duration {
    Duration::from_secs(1u64.checked_shl(attempt).unwrap_or(u64::MAX).min(60))
}

/// Starts every configured channel. Broker outages are retried in the
/// background and surface only through [`IntakeHandle::health`].
pub async fn start_intake(config: &IngestConfig, ingestor: Arc<Ingestor>) -> Result<IntakeHandle, IntakeError> {
    if config.mqtt.is_none() && config.tcp_test.is_none() {
        return Err(IntakeError::NoChannels);
    }
    let health: HealthMap = Arc::default();
    let mut tasks = Vec::new();
    let mut tcp_addr = None;

    if let Some(addr) = config.tcp_test {
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| IntakeError::Bind { addr, source })?;
        let bound = listener.local_addr().map_err(|source| IntakeError::Bind { addr, source })?;
        tcp_addr = Some(bound);
        health.write().insert(
            TCP_SOURCE.into(),
            ChannelHealth { live: true, detail: format!("listening on {bound}"), failures: 0 },
        );
        tasks.push(tokio::spawn(tcp_accept_loop(listener, ingestor.clone())));
    }

    if let Some(mqtt) = &config.mqtt {
        let options = mqtt_options(mqtt)?;
        health.write().insert(MQTT_SOURCE.into(), ChannelHealth { detail: "connecting".into(), ..Default::default() });
        tasks.push(tokio::spawn(mqtt_loop(options, mqtt.topic.clone(), ingestor, health.clone())));
    }

    Ok(IntakeHandle { health, tasks, tcp_addr })
}

fn mqtt_options(cfg: &MqttConfig) -> Result<MqttOptions, IntakeError> {
    let addr = cfg.broker.strip_prefix("mqtt://").unwrap_or(&cfg.broker);
    let (host, port) = match addr.rsplit_once(':') {
        Some((h, p)) => (h, p.parse::<u16>().map_err(|_| IntakeError::BadBroker(cfg.broker.clone()))?),
        None => (addr, 1883),
    };
    if host.is_empty() {
        return Err(IntakeError::BadBroker(cfg.broker.clone()));
    }
    let mut options = MqttOptions::new(cfg.client_id.clone(), host, port);
    options.set_keep_alive(Duration::from_secs(30));
    options.set_max_packet_size(512 * 1024, 512 * 1024);
    Ok(options)
}

async fn mqtt_loop(options: MqttOptions, topic: String, ingestor: Arc<Ingestor>, health: HealthMap) {
    let (client, mut eventloop) = AsyncClient::new(options, 64);
    let mut failures: u32 = 0;
    loop {
        match eventloop.poll().await {
            Ok(Event::Incoming(Packet::ConnAck(_))) => {
                failures = 0;
                // The session is not persistent, so every reconnect resubscribes.
                if let Err(e) = client.try_subscribe(topic.clone(), QoS::AtLeastOnce) {
                    tracing::warn!(error = %e, "mqtt subscribe request failed");
                }
                set_health(&health, MQTT_SOURCE, true, format!("connected, subscribed to {topic}"), false);
            }
            Ok(Event::Incoming(Packet::Publish(p))) => {
                let env = RawEnvelope::arrive(MQTT_SOURCE, p.topic.clone(), p.payload.to_vec());
                ingestor.on_message(env).await;
            }
            Ok(_) => {}
            Err(e) => {
                let delay = backoff_delay(failures);
                set_health(&health, MQTT_SOURCE, false, format!("{e}; retrying in {}s", delay.as_secs()), true);
                tracing::warn!(error = %e, retry_s = delay.as_secs(), "mqtt connection lost");
                failures = failures.saturating_add(1);
                tokio::time::sleep(delay).await;
            }
        }
    }
}

fn set_health(health: &HealthMap, channel: &str, live: bool, detail: String, failed: bool) {
    let mut map = health.write();
    let entry = map.entry(channel.to_string()).or_default();
    entry.live = live;
    entry.detail = detail;
    if failed {
        entry.failures += 1;
    }
}

async fn tcp_accept_loop(listener: TcpListener, ingestor: Arc<Ingestor>) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                let _ = stream.set_nodelay(true);
                tokio::spawn(tcp_connection(stream, peer, ingestor.clone()));
            }
            Err(e) => {
                tracing::warn!(error = %e, "tcp accept failed");
                tokio::time::sleep(Duration::from_millis(50)).await;
            }
        }
    }
}

// One reading per line. Each connection is read sequentially, which keeps
// per-connection arrival order.
async fn tcp_connection(stream: TcpStream, peer: SocketAddr, ingestor: Arc<Ingestor>) {
    let mut reader = BufReader::new(stream);
    let mut line = Vec::new();
    loop {
        line.clear();
        match reader.read_until(b'\n', &mut line).await {
            Ok(0) => break,
            Ok(_) => {
                while matches!(line.last(), Some(b'\n' | b'\r')) {
                    line.pop();
                }
                if line.is_empty() {
                    continue;
                }
                let env = RawEnvelope::arrive(TCP_SOURCE, TCP_SOURCE, std::mem::take(&mut line));
                ingestor.on_message(env).await;
            }
            Err(e) => {
                tracing::debug!(%peer, error = %e, "tcp read failed");
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_to_cap() {
        let secs: Vec<u64> = (0..9).map(|a| backoff_delay(a).as_secs()).collect();
        assert_eq!(secs, [1, 2, 4, 8, 16, 32, 60, 60, 60]);
        assert_eq!(backoff_delay(200).as_secs(), 60);
    }

    #[test]
    fn broker_addresses() {
        let cfg = |b: &str| MqttConfig { broker: b.into(), topic: "t".into(), client_id: "c".into() };
        assert_eq!(mqtt_options(&cfg("localhost:1883")).unwrap().broker_address(), ("localhost".into(), 1883));
        assert_eq!(mqtt_options(&cfg("mqtt://10.0.0.1:1999")).unwrap().broker_address(), ("10.0.0.1".into(), 1999));
        assert!(mqtt_options(&cfg(":1")).is_err());
    }
}
