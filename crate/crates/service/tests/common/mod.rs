#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use rainsim_core::config::SimConfig;
use rainsim_core::pipeline::Session;
use rainsim_core::synthetic::demo_scene;
use rainsim_service::{engine, Engine, Handle, ServiceOptions};
use serde_json::Value;
use tower::ServiceExt;

pub fn demo_session() -> Session {
    let cfg = SimConfig { fill_level: Some(0.05), seed: 3, ..SimConfig::default() };
    Session::new(demo_scene().unwrap(), cfg).unwrap()
}

pub fn manual_engine() -> (Engine, Handle) {
    engine(demo_session(), ServiceOptions { realtime: false, ..ServiceOptions::default() }).unwrap()
}

pub async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>, Option<String>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_owned());
    let body = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, body.to_vec(), ctype)
}

pub async fn get_json(app: &Router, path: &str) -> (StatusCode, Value) {
    let (status, body, _) = call(app, Request::get(path).body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&body).unwrap())
}

pub async fn post_raw(app: &Router, path: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::post(path).header("content-type", "application/json").body(Body::from(body.to_owned())).unwrap();
    let (status, body, _) = call(app, req).await;
    (status, serde_json::from_slice(&body).unwrap())
}
