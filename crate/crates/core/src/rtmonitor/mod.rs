// SPDX-License-Identifier: Apache-2.0

//! Token-based websocket subscriptions over the routed stream.
//!
//! The [`Hub`] owns every session's subscriptions and a bounded outbound
//! queue per session. Matching never blocks: a session whose queue is full
//! is removed and told why.

mod ws;

pub use ws::router;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use acp_model::event::all_match;
use acp_model::{Predicate, Timestamp};
use parking_lot::{Mutex, RwLock};
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::{mpsc, Notify};

use crate::par::{self, ExecMode};
use crate::streamproc::{PushSink, RoutedItem};

/// Below this many sessions matching runs inline.
const PARALLEL_SESSIONS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Subscription {
    pub request_id: String,
    /// Conjunction; empty matches everything.
    pub filters: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubscriptionError {
    #[error("duplicate")]
    Duplicate,
    #[error("unknown_request_id")]
    UnknownRequestId,
    #[error("unknown session")]
    UnknownSession,
}

#[derive(Debug)]
struct Session {
    id: u64,
    subs: Mutex<Vec<Subscription>>,
    tx: mpsc::Sender<String>,
    kill: Notify,
    dead: AtomicBool,
}

/// The receiving half of a session, owned by its connection task.
#[derive(Debug)]
pub struct SessionHandle {
    pub id: u64,
    pub rx: mpsc::Receiver<String>,
    pub overflow: OverflowSignal,
}

#[derive(Debug)]
pub struct OverflowSignal(Arc<Session>);

impl OverflowSignal {
    /// Resolves once the hub has dropped this session for overflowing.
    pub async fn wait(&self) {
        self.0.kill.notified().await
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PushReport {
    pub sessions: usize,
    pub matched: usize,
    pub delivered: usize,
    pub overflowed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionInfo {
    pub session_id: u64,
    pub request_ids: Vec<String>,
}

#[derive(Debug)]
pub struct Hub {
    sessions: RwLock<BTreeMap<u64, Arc<Session>>>,
    next_id: AtomicU64,
    buffer: usize,
    mode: ExecMode,
    overflows: AtomicU64,
}

impl Hub {
    /// `buffer` is the per-session outbound capacity.
    pub fn new(buffer: usize, mode: ExecMode) -> Self {
        Hub {
            sessions: RwLock::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
            buffer: buffer.max(1),
            mode,
            overflows: AtomicU64::new(0),
        }
    }

    pub fn connect(&self) -> SessionHandle {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel(self.buffer);
        let session = Arc::new(Session {
            id,
            subs: Mutex::new(Vec::new()),
            tx,
            kill: Notify::new(),
            dead: AtomicBool::new(false),
        });
        self.sessions.write().insert(id, session.clone());
        SessionHandle { id, rx, overflow: OverflowSignal(session) }
    }

    /// Drops the session and all its subscriptions.
    pub fn disconnect(&self, session_id: u64) {
        self.sessions.write().remove(&session_id);
    }

    fn session(&self, session_id: u64) -> Result<Arc<Session>, SubscriptionError> {
        self.sessions.read().get(&session_id).cloned().ok_or(SubscriptionError::UnknownSession)
    }

    pub fn subscribe(&self, session_id: u64, sub: Subscription) -> Result<(), SubscriptionError> {
        let session = self.session(session_id)?;
        let mut subs = session.subs.lock();
        if subs.iter().any(|s| s.request_id == sub.request_id) {
            return Err(SubscriptionError::Duplicate);
        }
        subs.push(sub);
        Ok(())
    }

    pub fn unsubscribe(&self, session_id: u64, request_id: &str) -> Result<(), SubscriptionError> {
        let session = self.session(session_id)?;
        let mut subs = session.subs.lock();
        let before = subs.len();
        subs.retain(|s| s.request_id != request_id);
        if subs.len() == before {
            return Err(SubscriptionError::UnknownRequestId);
        }
        Ok(())
    }

    pub fn registry(&self) -> Vec<SessionInfo> {
        self.sessions
            .read()
            .values()
            .map(|s| SessionInfo {
                session_id: s.id,
                request_ids: s.subs.lock().iter().map(|x| x.request_id.clone()).collect(),
            })
            .collect()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().len()
    }

    pub fn overflow_count(&self) -> u64 {
        self.overflows.load(Ordering::Relaxed)
    }

    /// Queues one `rt_data` frame per matching subscription.
    pub fn match_and_push(&self, item: &RoutedItem) -> PushReport {
        let sessions: Vec<Arc<Session>> = self.sessions.read().values().cloned().collect();
        let mut report = PushReport { sessions: sessions.len(), ..Default::default() };
        if sessions.is_empty() {
            return report;
        }
        let payload = item.to_document().to_string();
        let ts = Timestamp::now();
        let mode = if sessions.len() >= PARALLEL_SESSIONS { self.mode } else { ExecMode::Sequential };
        let results = par::map_ref(&sessions, mode, |s| deliver(s, item, &payload, ts));

        let mut overflowed = Vec::new();
        for (session, r) in sessions.iter().zip(results) {
            report.matched += r.matched;
            report.delivered += r.delivered;
            if r.overflowed {
                overflowed.push(session.clone());
            }
        }
        if !overflowed.is_empty() {
            let mut map = self.sessions.write();
            for s in overflowed {
                map.remove(&s.id);
                s.kill.notify_one();
                report.overflowed += 1;
                self.overflows.fetch_add(1, Ordering::Relaxed);
            }
        }
        report
    }
}

impl PushSink for Hub {
    fn push(&self, item: &RoutedItem) -> Result<usize, String> {
        Ok(self.match_and_push(item).delivered)
    }
}

struct Delivery {
    matched: usize,
    delivered: usize,
    overflowed: bool,
}

fn deliver(session: &Session, item: &RoutedItem, payload: &str, ts: Timestamp) -> Delivery {
    let mut out = Delivery { matched: 0, delivered: 0, overflowed: false };
    if session.dead.load(Ordering::Relaxed) {
        return out;
    }
    let subs = session.subs.lock();
    for sub in subs.iter().filter(|s| all_match(&s.filters, item)) {
        out.matched += 1;
        let frame = format!(
            r#"{{"msg_type":"rt_data","request_id":{},"ts":"{}","request_data":[{}]}}"#,
            Value::String(sub.request_id.clone()),
            ts,
            payload
        );
        match session.tx.try_send(frame) {
            Ok(()) => out.delivered += 1,
            Err(mpsc::error::TrySendError::Full(_)) => {
                session.dead.store(true, Ordering::Relaxed);
                out.overflowed = true;
                break;
            }
            // Receiver gone: the connection task is already tearing down.
            Err(mpsc::error::TrySendError::Closed(_)) => break,
        }
    }
    out
}

pub fn connect_ok() -> String {
    json!({"msg_type": "rt_connect_ok", "ts": Timestamp::now()}).to_string()
}

pub fn rt_error(request_id: Option<&str>, reason: &str) -> String {
    match request_id {
        Some(r) => json!({"msg_type": "rt_error", "request_id": r, "reason": reason}),
        None => json!({"msg_type": "rt_error", "reason": reason}),
    }
    .to_string()
}
