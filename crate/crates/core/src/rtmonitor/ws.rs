// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;
use std::time::Duration;

use acp_model::Predicate;
use axum::extract::ws::{close_code, CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use serde_json::Value;

use super::{connect_ok, rt_error, Hub, SessionHandle, Subscription};
use crate::config::RtMonitorConfig;

#[derive(Clone)]
struct WsState {
    hub: Arc<Hub>,
    config: RtMonitorConfig,
}

/// `/rtmonitor/WS` plus the read-only `/rtmonitor/registry` listing.
pub fn router(hub: Arc<Hub>, config: RtMonitorConfig) -> Router {
    Router::new()
        .route("/rtmonitor/WS", get(upgrade))
        .route("/rtmonitor/registry", get(registry))
        .with_state(WsState { hub, config })
}

async fn registry(State(st): State<WsState>) -> impl IntoResponse {
    Json(st.hub.registry())
}

async fn upgrade(ws: WebSocketUpgrade, State(st): State<WsState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| async move {
        let handle = st.hub.connect();
        let id = handle.id;
        run_session(socket, &st.hub, handle, &st.config).await;
        st.hub.disconnect(id);
    })
}

enum Reply {
    Frame(String),
    /// Close with a protocol error.
    Reject,
}

fn handle_text(hub: &Hub, session_id: u64, text: &str, first: bool) -> Reply {
    let malformed = |why: &str| if first { Reply::Reject } else { Reply::Frame(rt_error(None, why)) };
    let Ok(Value::Object(msg)) = serde_json::from_str::<Value>(text) else {
        return malformed("malformed");
    };
    let Some(msg_type) = msg.get("msg_type").and_then(Value::as_str) else {
        return malformed("malformed");
    };
    let Some(request_id) = msg.get("request_id").and_then(Value::as_str) else {
        return malformed("missing request_id");
    };
    match msg_type {
        "rt_subscribe" => {
            let raw = match msg.get("filters") {
                None | Some(Value::Null) => Vec::new(),
                Some(Value::Array(items)) => items.clone(),
                Some(_) => return Reply::Frame(rt_error(Some(request_id), "bad_filter")),
            };
            let filters: Result<Vec<Predicate>, _> = raw.into_iter().map(serde_json::from_value).collect();
            let Ok(filters) = filters else {
                return Reply::Frame(rt_error(Some(request_id), "bad_filter"));
            };
            let sub = Subscription { request_id: request_id.to_string(), filters };
            match hub.subscribe(session_id, sub) {
                Ok(()) => Reply::Frame(
                    serde_json::json!({"msg_type": "rt_subscribe_ok", "request_id": request_id}).to_string(),
                ),
                Err(e) => Reply::Frame(rt_error(Some(request_id), &e.to_string())),
            }
        }
        "rt_unsubscribe" => match hub.unsubscribe(session_id, request_id) {
            Ok(()) => Reply::Frame(
                serde_json::json!({"msg_type": "rt_unsubscribe_ok", "request_id": request_id}).to_string(),
            ),
            Err(e) => Reply::Frame(rt_error(Some(request_id), &e.to_string())),
        },
        _ => malformed("unknown_msg_type"),
    }
}

async fn close(socket: &mut WebSocket, code: u16, reason: &str) {
    let _ = socket
        .send(Message::Close(Some(CloseFrame { code, reason: reason.into() })))
        .await;
}

async fn run_session(mut socket: WebSocket, hub: &Hub, mut handle: SessionHandle, config: &RtMonitorConfig) {
    if socket.send(Message::Text(connect_ok().into())).await.is_err() {
        return;
    }
    let period = Duration::from_secs_f64(config.ping_interval_s.max(0.01));
    let mut ping = tokio::time::interval_at(tokio::time::Instant::now() + period, period);
    let mut missed = 0u32;
    let mut first = true;

    loop {
        tokio::select! {
            _ = handle.overflow.wait() => {
                let _ = socket.send(Message::Text(rt_error(None, "overflow").into())).await;
                close(&mut socket, close_code::POLICY, "overflow").await;
                return;
            }
            out = handle.rx.recv() => match out {
                Some(frame) => {
                    if socket.send(Message::Text(frame.into())).await.is_err() {
                        return;
                    }
                }
                None => return,
            },
            incoming = socket.recv() => {
                let reply = match incoming {
                    None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                    Some(Ok(Message::Text(text))) => handle_text(hub, handle.id, text.as_str(), first),
                    Some(Ok(Message::Binary(_))) => {
                        if first { Reply::Reject } else { Reply::Frame(rt_error(None, "malformed")) }
                    }
                    Some(Ok(Message::Pong(_))) => {
                        missed = 0;
                        continue;
                    }
                    Some(Ok(Message::Ping(_))) => continue,
                };
                first = false;
                match reply {
                    Reply::Frame(f) => {
                        if socket.send(Message::Text(f.into())).await.is_err() {
                            return;
                        }
                    }
                    Reply::Reject => {
                        close(&mut socket, close_code::PROTOCOL, "malformed first frame").await;
                        return;
                    }
                }
            }
            _ = ping.tick() => {
                if missed >= config.max_missed_pongs {
                    close(&mut socket, close_code::AWAY, "ping timeout").await;
                    return;
                }
                missed += 1;
                if socket.send(Message::Ping(Default::default())).await.is_err() {
                    return;
                }
            }
        }
    }
}
