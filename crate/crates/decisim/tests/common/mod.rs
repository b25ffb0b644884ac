#![allow(dead_code)]

use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use decisim::service::{Service, ServiceConfig};
use decisim::warehouse::{builtin_priors, Store};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub struct Transcript {
    pub turns: Vec<String>,
    pub feedback: String,
    pub expected_slots: serde_json::Map<String, Value>,
}

pub fn transcript() -> Transcript {
    let v: Value = serde_json::from_str(include_str!("../fixtures/car_transcript.json")).unwrap();
    Transcript {
        turns: v["turns"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t.as_str().unwrap().to_string())
            .collect(),
        feedback: v["feedback"].as_str().unwrap().to_string(),
        expected_slots: v["expected_slots"].as_object().unwrap().clone(),
    }
}

pub fn seeded_store() -> Arc<Store> {
    let store = Store::in_memory();
    for p in builtin_priors() {
        store.insert_prior(p).unwrap();
    }
    Arc::new(store)
}

pub fn config(samples: usize) -> ServiceConfig {
    ServiceConfig {
        default_sample_count: samples,
        log_requests: false,
        ..ServiceConfig::default()
    }
}

pub fn router(store: Arc<Store>, samples: usize) -> Router {
    Service::new(store, config(samples)).router()
}

pub async fn call(app: &Router, method: Method, path: &str, body: Option<Value>) -> (StatusCode, Bytes) {
    let mut req = Request::builder().method(method).uri(path);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, bytes)
}

pub fn json(bytes: &Bytes) -> Value {
    serde_json::from_slice(bytes).unwrap_or(Value::Null)
}

pub async fn new_session(app: &Router) -> String {
    let (status, body) = call(app, Method::POST, "/v1/sessions", Some(serde_json::json!({}))).await;
    assert_eq!(status, StatusCode::CREATED);
    json(&body)["session_id"].as_str().unwrap().to_string()
}

pub async fn say(app: &Router, id: &str, text: &str) -> Value {
    let (status, body) = call(
        app,
        Method::POST,
        &format!("/v1/sessions/{id}/messages"),
        Some(serde_json::json!({ "text": text })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    json(&body)
}

/// The final transcript turn cut just before the lease details.
pub fn before_lease_answer(turn: &str) -> &str {
    let cut = turn.find("For leasing").expect("lease sentence present");
    &turn[..cut]
}
