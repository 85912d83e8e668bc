// SPDX-License-Identifier: Apache-2.0

//! Sends a trace to the line-delimited TCP intake channel.

use std::time::{Duration, Instant};

use serde::Serialize;
use tokio::io::AsyncWriteExt;
use tokio::net::TcpStream;

use crate::error::{Result, SimError};
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub sent: usize,
    pub duration_s: f64,
    pub achieved_rate: f64,
}

/// Accepts `host:port` or `tcp://host:port`.
pub fn parse_target(target: &str) -> Result<String> {
    let addr = target.strip_prefix("tcp://").unwrap_or(target);
    if addr.contains("://") || !addr.contains(':') {
        return Err(SimError::Usage(format!("target {target:?} is not tcp://host:port")));
    }
    Ok(addr.to_string())
}

/// Sends at the trace's own spacing divided by `speed`; `speed == 0`
/// sends back-to-back.
pub async fn replay(trace: &Trace, speed: f64, target: &str) -> Result<ReplayReport> {
    if !(speed.is_finite() && speed >= 0.0) {
        return Err(SimError::Usage("--speed must be a finite number >= 0".into()));
    }
    let addr = parse_target(target)?;
    let mut stream = TcpStream::connect(&addr)
        .await
        .map_err(|e| SimError::runtime(&format!("connecting to {addr}"), e))?;
    let _ = stream.set_nodelay(true);

    let started = Instant::now();
    let origin = trace.records.first().map(|r| r.send_ts.as_micros()).unwrap_or(0);
    let mut line = Vec::new();
    for r in &trace.records {
        if speed > 0.0 {
            let offset = (r.send_ts.as_micros() - origin) as f64 / 1e6 / speed;
            let due = started + Duration::from_secs_f64(offset);
            tokio::time::sleep_until(due.into()).await;
        }
        line.clear();
        serde_json::to_writer(&mut line, &r.payload).map_err(|e| SimError::runtime("encoding payload", e))?;
        line.push(b'\n');
        stream.write_all(&line).await.map_err(|e| SimError::runtime("sending", e))?;
    }
    stream.flush().await.map_err(|e| SimError::runtime("sending", e))?;
    stream.shutdown().await.map_err(|e| SimError::runtime("closing", e))?;

    let duration_s = started.elapsed().as_secs_f64();
    let sent = trace.records.len();
    let achieved_rate = if duration_s > 0.0 { sent as f64 / duration_s } else { 0.0 };
    Ok(ReplayReport { sent, duration_s, achieved_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{gen_trace, read_trace, TraceParams, DEFAULT_START_SECS};
    use acp_model::Timestamp;
    use tokio::io::AsyncReadExt;
    use tokio::net::TcpListener;

    async fn sink() -> (String, tokio::task::JoinHandle<Vec<u8>>) {
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let task = tokio::spawn(async move {
            let (mut s, _) = listener.accept().await.unwrap();
            let mut buf = Vec::new();
            s.read_to_end(&mut buf).await.unwrap();
            buf
        });
        (addr, task)
    }

    fn trace(sensors: usize, period: f64, duration: f64) -> Trace {
        gen_trace(TraceParams { sensors, period_s: period, duration_s: duration, seed: 1, start: Timestamp::from_secs(DEFAULT_START_SECS) })
            .unwrap()
    }

    #[tokio::test]
    async fn sends_every_payload_as_a_line() {
        let t = trace(10, 1.0, 5.0);
        let (addr, task) = sink().await;
        let report = replay(&t, 0.0, &format!("tcp://{addr}")).await.unwrap();
        assert_eq!(report.sent, 50);
        let got = task.await.unwrap();
        let lines: Vec<serde_json::Value> =
            got.split(|b| *b == b'\n').filter(|l| !l.is_empty()).map(|l| serde_json::from_slice(l).unwrap()).collect();
        let want: Vec<_> = t.records.iter().map(|r| r.payload.clone()).collect();
        assert_eq!(lines, want);
    }

    #[tokio::test]
    async fn speed_scales_spacing() {
        // Two seconds of trace at 10x takes about 0.2 s.
        let t = trace(4, 1.0, 2.0);
        let span = (t.records.last().unwrap().send_ts.as_micros() - t.records[0].send_ts.as_micros()) as f64 / 1e6;
        let (addr, task) = sink().await;
        let report = replay(&t, 10.0, &addr).await.unwrap();
        task.await.unwrap();
        assert!(report.duration_s >= span / 10.0 * 0.95, "{report:?}");
        assert!(report.duration_s < span / 10.0 + 0.5, "{report:?}");
    }

    #[tokio::test]
    async fn empty_trace_and_errors() {
        let empty = read_trace(&b""[..]).unwrap();
        let (addr, task) = sink().await;
        assert_eq!(replay(&empty, 1.0, &addr).await.unwrap().sent, 0);
        assert!(task.await.unwrap().is_empty());

        let port = TcpListener::bind("127.0.0.1:0").await.unwrap().local_addr().unwrap().port();
        assert_eq!(replay(&empty, 1.0, &format!("127.0.0.1:{port}")).await.unwrap_err().exit_code(), 2);
        assert_eq!(replay(&empty, 1.0, "mqtt://x:1").await.unwrap_err().exit_code(), 1);
        assert_eq!(replay(&empty, -1.0, "x:1").await.unwrap_err().exit_code(), 1);
    }
}
