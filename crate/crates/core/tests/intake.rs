// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use acp_core::config::{IngestConfig, MqttConfig};
use acp_core::ingest::{start_intake, DecoderRegistry, Ingestor, IntakeError, IntakeHandle};
use acp_core::store::MetadataStore;
use acp_model::SensorReading;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;

fn ingestor(dir: &std::path::Path, capacity: usize) -> (Arc<Ingestor>, mpsc::Receiver<SensorReading>) {
    let (tx, rx) = mpsc::channel(capacity);
    let meta = Arc::new(MetadataStore::in_memory());
    (Arc::new(Ingestor::new(dir, DecoderRegistry::default(), meta, tx, 256 * 1024)), rx)
}

async fn wait_for(mut cond: impl FnMut() -> bool, limit: Duration) -> bool {
    let deadline = tokio::time::Instant::now() + limit;
    while tokio::time::Instant::now() < deadline {
        if cond() {
            return true;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    cond()
}

fn raw_file_count(dir: &std::path::Path) -> usize {
    let raw = dir.join("raw");
    let Ok(days) = std::fs::read_dir(raw) else { return 0 };
    days.map(|d| std::fs::read_dir(d.unwrap().path()).unwrap().count()).sum()
}

#[tokio::test]
async fn empty_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (ing, _rx) = ingestor(dir.path(), 10);
    let err = start_intake(&IngestConfig::default(), ing).await.unwrap_err();
    assert!(matches!(err, IntakeError::NoChannels));
}

#[tokio::test(flavor = "multi_thread")]
async fn tcp_channel_keeps_per_sensor_order() {
    let dir = tempfile::tempdir().unwrap();
    let (ing, mut rx) = ingestor(dir.path(), 10_000);
    let config = IngestConfig { tcp_test: Some("127.0.0.1:0".parse().unwrap()), ..IngestConfig::default() };
    let handle = start_intake(&config, ing.clone()).await.unwrap();
    assert!(handle.health()["tcp_test"].live);
    let addr = handle.tcp_addr().unwrap();

    // 1000 sensors, three readings each, spread over four connections.
    let mut writers = Vec::new();
    for conn in 0..4 {
        writers.push(tokio::spawn(async move {
            let mut tcp = TcpStream::connect(addr).await.unwrap();
            let mut buf = String::new();
            for seq in 0..3 {
                for s in (conn..1000).step_by(4) {
                    let ts = 1_600_000_000 + seq;
                    buf.push_str(&format!(
                        r#"{{"acp_id":"sim-{s:04}","acp_ts":"{ts}","features":{{"seq":{seq}}}}}"#
                    ));
                    buf.push('\n');
                }
            }
            tcp.write_all(buf.as_bytes()).await.unwrap();
        }));
    }
    for w in writers {
        w.await.unwrap();
    }

    let mut per_sensor: HashMap<String, Vec<f64>> = HashMap::new();
    for _ in 0..3000 {
        let r = tokio::time::timeout(Duration::from_secs(10), rx.recv()).await.unwrap().unwrap();
        per_sensor.entry(r.acp_id.clone()).or_default().push(r.features.get("seq").unwrap());
    }
    assert_eq!(per_sensor.len(), 1000);
    assert!(per_sensor.values().all(|v| v == &[0.0, 1.0, 2.0]));
    let stats = ing.stats();
    assert!(wait_for(|| stats.snapshot().enqueued == 3000, Duration::from_secs(2)).await);
    let stats = stats.snapshot();
    assert_eq!(raw_file_count(dir.path()), stats.archived as usize);
    assert_eq!(stats.archived, stats.received);
    handle.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_broker_reports_unhealthy() {
    let dir = tempfile::tempdir().unwrap();
    let (ing, _rx) = ingestor(dir.path(), 10);
    // A port that was just free: connections are refused.
    let port = TcpListener::bind("127.0.0.1:0").await.unwrap().local_addr().unwrap().port();
    let config = IngestConfig {
        mqtt: Some(MqttConfig { broker: format!("127.0.0.1:{port}"), topic: "acp/+/up".into(), client_id: "t".into() }),
        ..IngestConfig::default()
    };
    let handle = start_intake(&config, ing).await.unwrap();
    assert!(wait_for(|| handle.health()["mqtt"].failures >= 1, Duration::from_secs(5)).await);
    let h = &handle.health()["mqtt"];
    assert!(!h.live);
    assert!(h.detail.contains("retrying in 1s"), "{}", h.detail);
    handle.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn mqtt_channel_subscribes_and_resubscribes() {
    let dir = tempfile::tempdir().unwrap();
    let (ing, mut rx) = ingestor(dir.path(), 100);
    let broker = StubBroker::start().await;
    let config = IngestConfig {
        mqtt: Some(MqttConfig { broker: broker.addr.clone(), topic: "acp/+/up".into(), client_id: "t".into() }),
        ..IngestConfig::default()
    };
    let handle: IntakeHandle = start_intake(&config, ing.clone()).await.unwrap();

    let payload = br#"{"acp_id":"elsys-co2-041ba9","acp_ts":"1589469979.861816","features":{"co2":415,"device":"elsys_co2","humidity":36,"light":0,"motion":2,"temperature":15.3,"vdd":3659}}"#;
    let (topic, filter, conn) = broker.session(&[("acp/elsys-co2-041ba9/up", payload.to_vec())]).await;
    assert_eq!(filter, "acp/+/up");
    assert_eq!(topic, "t");
    let r = tokio::time::timeout(Duration::from_secs(5), rx.recv()).await.unwrap().unwrap();
    assert_eq!(r.acp_id, "elsys-co2-041ba9");
    assert_eq!(r.features.get("co2"), Some(415.0));
    assert!(wait_for(|| handle.health()["mqtt"].live, Duration::from_secs(2)).await);
    drop(conn);

    // The stub drops the connection after each session; the client must
    // reconnect and subscribe again.
    let (_, filter, _conn) = broker.session(&[("acp/other/up", br#"{"acp_id":"other","features":{"t":1}}"#.to_vec())]).await;
    assert_eq!(filter, "acp/+/up");
    let r = tokio::time::timeout(Duration::from_secs(5), rx.recv()).await.unwrap().unwrap();
    assert_eq!(r.acp_id, "other");
    assert!(handle.health()["mqtt"].failures >= 1);
    assert_eq!(raw_file_count(dir.path()), 2);
    handle.shutdown();
}

/// Just enough MQTT 3.1.1 to accept one client per session: CONNACK,
/// SUBACK, PINGRESP, and QoS 0 publishes from the broker side.
struct StubBroker {
    addr: String,
    listener: TcpListener,
}

impl StubBroker {
    async fn start() -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        StubBroker { addr: listener.local_addr().unwrap().to_string(), listener }
    }

    /// Serves one connection; returns (client id, subscribed filter) and
    /// the socket, which closes when dropped.
    async fn session(&self, publishes: &[(&str, Vec<u8>)]) -> (String, String, TcpStream) {
        let (mut s, _) = tokio::time::timeout(Duration::from_secs(10), self.listener.accept()).await.unwrap().unwrap();
        let (kind, body) = read_packet(&mut s).await;
        assert_eq!(kind >> 4, 1, "CONNECT");
        let client_id = connect_client_id(&body);
        s.write_all(&[0x20, 0x02, 0x00, 0x00]).await.unwrap();
        let filter = loop {
            let (kind, body) = read_packet(&mut s).await;
            match kind >> 4 {
                8 => {
                    s.write_all(&[0x90, 0x03, body[0], body[1], 0x00]).await.unwrap();
                    let len = u16::from_be_bytes([body[2], body[3]]) as usize;
                    break String::from_utf8(body[4..4 + len].to_vec()).unwrap();
                }
                12 => s.write_all(&[0xD0, 0x00]).await.unwrap(),
                other => panic!("unexpected packet type {other}"),
            }
        };
        for (topic, payload) in publishes {
            let mut body = (topic.len() as u16).to_be_bytes().to_vec();
            body.extend_from_slice(topic.as_bytes());
            body.extend_from_slice(payload);
            let mut packet = vec![0x30];
            packet.extend(encode_len(body.len()));
            packet.extend(body);
            s.write_all(&packet).await.unwrap();
        }
        s.flush().await.unwrap();
        (client_id, filter, s)
    }
}

async fn read_packet(s: &mut TcpStream) -> (u8, Vec<u8>) {
    let kind = s.read_u8().await.unwrap();
    let (mut len, mut shift) = (0usize, 0);
    loop {
        let b = s.read_u8().await.unwrap();
        len |= ((b & 0x7f) as usize) << shift;
        if b & 0x80 == 0 {
            break;
        }
        shift += 7;
    }
    let mut body = vec![0; len];
    s.read_exact(&mut body).await.unwrap();
    (kind, body)
}

fn encode_len(mut n: usize) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let mut b = (n % 128) as u8;
        n /= 128;
        if n > 0 {
            b |= 0x80;
        }
        out.push(b);
        if n == 0 {
            return out;
        }
    }
}

// Variable header: protocol name, level, flags, keep-alive; then client id.
fn connect_client_id(body: &[u8]) -> String {
    let name_len = u16::from_be_bytes([body[0], body[1]]) as usize;
    let at = 2 + name_len + 4;
    let len = u16::from_be_bytes([body[at], body[at + 1]]) as usize;
    String::from_utf8(body[at + 2..at + 2 + len].to_vec()).unwrap()
}
