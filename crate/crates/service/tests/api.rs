mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::*;
use rainsim_core::image::read_png;
use rainsim_core::pipeline::{run_sequence, FrameSink};
use rainsim_core::protocol::StateReport;
use rainsim_service::router;

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

#[tokio::test]
async fn state_has_the_documented_fields() {
    let (_engine, handle) = manual_engine();
    let app = router(handle);
    let (status, v) = get_json(&app, "/api/state").await;
    assert_eq!(status, StatusCode::OK);
    for key in ["time", "fps", "params", "sum_h", "drops_alive"] {
        assert!(v.get(key).is_some(), "missing {key} in {v}");
    }
    for key in ["rain_intensity", "wind", "water_level_offset", "paused", "view"] {
        assert!(v["params"].get(key).is_some(), "missing params.{key}");
    }
}

#[tokio::test]
async fn intensity_is_clamped_in_the_echo() {
    let (_engine, handle) = manual_engine();
    let app = router(handle);
    let (status, v) = post_raw(&app, "/api/params", r#"{"rain_intensity": 20}"#).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["rain_intensity"], 10.0);
    let (_, v) = post_raw(&app, "/api/params", r#"{"rain_intensity": -3, "wind": [1.5, 0]}"#).await;
    assert_eq!(v["rain_intensity"], 0.0);
    assert_eq!(v["wind"][0], 1.5);
}

#[tokio::test]
async fn bad_bodies_name_the_field() {
    let (_engine, handle) = manual_engine();
    let app = router(handle);
    for (body, field) in [
        ("{not json", "body"),
        ("[1, 2]", "body"),
        (r#"{"rain_intensity": "heavy"}"#, "rain_intensity"),
        (r#"{"wind": [1]}"#, "wind"),
        (r#"{"paused": 1}"#, "paused"),
        (r#"{"colour": "blue"}"#, "colour"),
    ] {
        let (status, v) = post_raw(&app, "/api/params", body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(v["field"], field, "{body}");
    }
}

#[tokio::test]
async fn unknown_view_is_404_and_not_applied() {
    let (mut engine, handle) = manual_engine();
    let app = router(handle);
    let (status, v) = post_raw(&app, "/api/params", r#"{"view": "roof", "rain_intensity": 2}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["field"], "view");
    engine.frame().unwrap();
    let (_, v) = get_json(&app, "/api/state").await;
    assert_eq!(v["params"]["rain_intensity"], 1.0);
    assert_eq!(v["params"]["view"], "main");

    let (status, _) = post_raw(&app, "/api/params", r#"{"view": "side"}"#).await;
    assert_eq!(status, StatusCode::OK);
    engine.frame().unwrap();
    let (_, v) = get_json(&app, "/api/state").await;
    assert_eq!(v["params"]["view"], "side");
}

#[tokio::test]
async fn updates_apply_at_the_frame_boundary_last_writer_wins() {
    let (mut engine, handle) = manual_engine();
    let app = router(handle);
    engine.frame().unwrap();
    post_raw(&app, "/api/params", r#"{"rain_intensity": 2}"#).await;
    post_raw(&app, "/api/params", r#"{"rain_intensity": 3, "paused": false}"#).await;
    let (_, before) = get_json(&app, "/api/state").await;
    assert_eq!(before["params"]["rain_intensity"], 1.0, "applied before the boundary");
    engine.frame().unwrap();
    let (_, after) = get_json(&app, "/api/state").await;
    assert_eq!(after["params"]["rain_intensity"], 3.0);
    assert_eq!(after["frame_index"], before["frame_index"].as_u64().unwrap() + 1);
    assert_eq!(engine.session().live().rain_intensity, 3.0);
}

#[tokio::test]
async fn frame_is_a_png_of_the_view() {
    let (mut engine, handle) = manual_engine();
    let app = router(handle);
    engine.frame().unwrap();
    let (status, body, ctype) = call(&app, Request::get("/api/frame").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("image/png"));
    assert!(body.starts_with(PNG_MAGIC));
    let (w, h, _) = read_png(std::io::Cursor::new(body)).unwrap();
    let cam = &engine.session().view().camera;
    assert_eq!((w as usize, h as usize), (cam.width, cam.height));
}

#[tokio::test]
async fn zero_intensity_drains_the_rain() {
    let (mut engine, handle) = manual_engine();
    let app = router(handle);
    for _ in 0..10 {
        engine.frame().unwrap();
    }
    let (_, v) = get_json(&app, "/api/state").await;
    assert!(v["drops_alive"].as_u64().unwrap() > 0);
    post_raw(&app, "/api/params", r#"{"rain_intensity": 0}"#).await;
    let mut frames = 0;
    loop {
        engine.frame().unwrap();
        frames += 1;
        let (_, v) = get_json(&app, "/api/state").await;
        if v["drops_alive"] == 0 && engine.session().state().splashes.is_empty() {
            break;
        }
        assert!(frames < 90, "rain did not stop: {v}");
    }
    // With nothing falling, the picture only changes as the water settles.
    engine.frame().unwrap();
    let (_, v) = get_json(&app, "/api/state").await;
    assert_eq!(v["drops_alive"], 0);
}

#[tokio::test]
async fn pause_freezes_state_and_frame() {
    let (mut engine, handle) = manual_engine();
    let app = router(handle.clone());
    engine.frame().unwrap();
    post_raw(&app, "/api/params", r#"{"paused": true}"#).await;
    engine.frame().unwrap();
    let a = handle.latest();
    engine.frame().unwrap();
    let b = handle.latest();
    assert_eq!(a.report.frame_index, b.report.frame_index);
    assert_eq!(a.report.sum_h, b.report.sum_h);
    assert_eq!(a.png, b.png);
    assert!(b.report.params.paused);
}

#[tokio::test]
async fn reset_restarts_from_the_seed() {
    let (mut engine, handle) = manual_engine();
    let app = router(handle.clone());
    for _ in 0..4 {
        engine.frame().unwrap();
    }
    let (status, _) = post_raw(&app, "/api/reset", "").await;
    assert_eq!(status, StatusCode::OK);
    engine.frame().unwrap();

    let mut fresh = demo_session();
    fresh.step().unwrap();
    let r = &handle.latest().report;
    assert_eq!(r.frame_index, 1);
    assert_eq!(r.sum_h, fresh.state().swe.total_depth());
    assert_eq!(r.drops_alive, fresh.state().drops.len());
}

struct Discard;

impl FrameSink for Discard {
    fn write_file(&mut self, _: &str, _: &[u8]) -> std::io::Result<()> {
        Ok(())
    }
}

#[tokio::test]
async fn state_sum_h_matches_the_run_ledger() {
    let (mut engine, handle) = manual_engine();
    let app = router(handle);
    let frames = 6;
    for _ in 0..frames {
        engine.frame().unwrap();
    }
    let (_, v) = get_json(&app, "/api/state").await;
    let report: StateReport = serde_json::from_value(v).unwrap();

    let mut batch = demo_session();
    let manifest = run_sequence(&mut batch, frames, &mut Discard, false).unwrap();
    let last = manifest.frames.last().unwrap();
    assert_eq!(report.sum_h, last.sum_h);
    assert_eq!(report.drops_alive, last.drops_alive);
}
