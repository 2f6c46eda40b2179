use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rainsim_core::protocol::{FieldError, ParamsUpdate};
use serde_json::{json, Value};
use tokio::time::Instant;

use crate::engine::{Handle, Snapshot};

/// Routes under `/api`: `state`, `params`, `reset`, `frame` and the
/// `stream` WebSocket.
pub fn router(handle: Handle) -> Router {
    Router::new()
        .route("/api/state", get(state))
        .route("/api/params", post(params))
        .route("/api/reset", post(reset))
        .route("/api/frame", get(frame))
        .route("/api/stream", get(stream))
        .with_state(handle)
}

fn field_error(status: StatusCode, e: FieldError) -> Response {
    (status, Json(e)).into_response()
}

async fn state(State(h): State<Handle>) -> Response {
    Json(h.latest().report.clone()).into_response()
}

async fn params(State(h): State<Handle>, body: Bytes) -> Response {
    let value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return field_error(StatusCode::BAD_REQUEST, FieldError::new("body", format!("invalid JSON: {e}"))),
    };
    let update = match ParamsUpdate::from_json(&value) {
        Ok(u) => u,
        Err(e) => return field_error(StatusCode::BAD_REQUEST, e),
    };
    match h.update_params(&update) {
        Ok(p) => Json(p).into_response(),
        Err(e) => field_error(StatusCode::NOT_FOUND, e),
    }
}

async fn reset(State(h): State<Handle>) -> Response {
    h.request_reset();
    Json(json!({ "reset": true })).into_response()
}

async fn frame(State(h): State<Handle>) -> Response {
    let snap = h.latest();
    ([(header::CONTENT_TYPE, "image/png")], snap.png.clone()).into_response()
}

async fn stream(State(h): State<Handle>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| push_frames(socket, h))
}

async fn send_snapshot(socket: &mut WebSocket, snap: &Snapshot) -> Result<(), axum::Error> {
    socket.send(Message::Binary(snap.png.clone())).await?;
    let text = serde_json::to_string(&snap.report).expect("state serializes");
    socket.send(Message::Text(text.into())).await
}

/// Send the latest frame whenever a new one is published, at most
/// `stream_fps` times a second. Frames published in between are skipped.
async fn push_frames(mut socket: WebSocket, h: Handle) {
    let mut rx = h.subscribe();
    let gap = Duration::from_secs_f64(1.0 / h.options().stream_fps);
    let mut next_send = Instant::now();
    loop {
        let snap = rx.borrow_and_update().clone();
        if send_snapshot(&mut socket, &snap).await.is_err() {
            return;
        }
        next_send += gap;
        tokio::time::sleep_until(next_send.max(Instant::now())).await;
        next_send = next_send.max(Instant::now());
        tokio::select! {
            changed = rx.changed() => {
                if changed.is_err() {
                    return;
                }
            }
            msg = socket.recv() => match msg {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                Some(Ok(_)) => {
                    // Client messages are ignored; wait for the next frame.
                    if rx.changed().await.is_err() {
                        return;
                    }
                }
            },
        }
    }
}
