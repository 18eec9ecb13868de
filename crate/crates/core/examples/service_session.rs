//! Drive the HTTP service in-process: upload a clip, configure noise,
//! generate, and fetch the comparison payload the web console plots.
//!
//!     cargo run --example service_session
//!
//! `vna serve` exposes the same router over TCP.

mod support;

use std::time::Duration;

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use vna::media_io::{container, synthetic_clip};
use vna::service::{router, AppState, ServiceConfig};

const BOUNDARY: &str = "vna-example";

async fn send(app: &Router, req: Request<Body>) -> (u16, Value) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status().as_u16();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn json_call(app: &Router, method: &str, uri: &str, body: Value) -> (u16, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(if body.is_null() { Body::empty() } else { Body::from(body.to_string()) })
        .unwrap();
    send(app, req).await
}

fn main() {
    support::serve_codec_if_requested();
    tokio::runtime::Runtime::new().unwrap().block_on(run());
}

async fn run() {
    let dir = support::scratch("service_session");
    let mut config = ServiceConfig::new(dir.join("data"));
    config.transcoder = Some(support::transcoder());
    let app = router(AppState::open(config).unwrap());

    // upload a clip with its word alignment
    let clip = dir.join("clip.vnar");
    let (v, a) = synthetic_clip(3.0, 10.0, 96, 64, 16_000, 1, 5);
    container::write_clip(&clip, Some(&v), Some(&a)).unwrap();
    let alignment = json!({"language": "en", "words": [
        {"token": "what", "start_s": 0.2, "end_s": 0.5},
        {"token": "a", "start_s": 0.6, "end_s": 0.7},
        {"token": "view", "start_s": 0.8, "end_s": 1.3}
    ]});
    let mut body = Vec::new();
    for (name, file, bytes) in [
        ("media", "clip.vnar", std::fs::read(&clip).unwrap()),
        ("alignment", "words.json", alignment.to_string().into_bytes()),
    ] {
        body.extend(format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{file}\"\r\n\r\n").bytes());
        body.extend(bytes);
        body.extend(b"\r\n");
    }
    body.extend(format!("--{BOUNDARY}--\r\n").bytes());
    let req = Request::post("/sessions")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(body))
        .unwrap();
    let (status, session) = send(&app, req).await;
    let id = session["id"].as_str().expect("session id").to_string();
    println!("created session {id} ({status}): {}", session["meta"]);

    let (_, kinds) = json_call(&app, "GET", "/kinds", Value::Null).await;
    let count: usize = kinds.as_object().map_or(0, |m| m.values().filter_map(Value::as_array).map(Vec::len).sum());
    println!("{count} noise kinds available");

    let spec = json!({"seed": 3, "items": [
        {"modality": "audio", "kind": "mute", "start_s": 1.0, "end_s": 2.0, "intensity": 1.0},
        {"modality": "video", "kind": "blank", "start_s": 1.0, "end_s": 2.0, "intensity": 0.9},
        {"modality": "text", "kind": "erase", "start_s": 0.0, "end_s": 0.75, "intensity": 1.0}
    ]});
    let (status, _) = json_call(&app, "POST", &format!("/sessions/{id}/noise"), spec).await;
    println!("noise spec stored ({status})");

    let (status, job) = json_call(&app, "POST", &format!("/sessions/{id}/generate"), Value::Null).await;
    println!("generation queued ({status}): {job}");
    loop {
        let (_, st) = json_call(&app, "GET", &format!("/sessions/{id}/status"), Value::Null).await;
        if st["status"] == "done" || st["status"] == "failed" {
            println!("generation {}", st["status"]);
            break;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }

    let (_, cmp) = json_call(&app, "GET", &format!("/sessions/{id}/compare"), Value::Null).await;
    let rms = |side: &str| cmp[side]["audio"]["rms"].as_array().map(|v| v.len()).unwrap_or(0);
    println!("original tokens: {}", cmp["original"]["tokens"]);
    println!("noisy tokens   : {}", cmp["noisy"]["tokens"]);
    println!("audio windows  : {} original / {} noisy", rms("original"), rms("noisy"));
    println!("noisy luma     : {}", cmp["noisy"]["video"]["mean_luma"]);
}
