mod common;

use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use common::*;
use dash_core::canonical;
use dash_service::http::{router, AppState};
use dash_service::scenario;
use dash_service::{Service, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Client {
    app: Router,
    state: AppState,
}

impl Client {
    fn new() -> Self {
        Self::with_config(config())
    }

    fn with_config(config: ServiceConfig) -> Self {
        let state = AppState::new(Service::open(config).unwrap());
        Client { app: router(state.clone()), state }
    }

    async fn call(&self, key: Option<&str>, method: Method, path: &str, body: Option<Value>) -> (StatusCode, Value, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(k) = key {
            req = req.header(header::AUTHORIZATION, format!("Bearer {k}"));
        }
        let body = body.map_or_else(Body::empty, |b| Body::from(serde_json::to_vec(&b).unwrap()));
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value, bytes)
    }

    async fn ok(&self, key: &str, method: Method, path: &str, body: Option<Value>) -> Value {
        let (status, value, _) = self.call(Some(key), method, path, body).await;
        assert_eq!(status, StatusCode::OK, "{path}: {value}");
        value
    }

    async fn onboard(&self, id: &str) -> String {
        let body = serde_json::to_value(onboard_request(id, 0)).unwrap();
        let v = self.ok("dash-admin", Method::POST, "/admin/patients", Some(body)).await;
        v["apiKey"].as_str().unwrap().to_owned()
    }

    async fn provider(&self, name: &str) -> String {
        let v = self.ok("dash-admin", Method::POST, "/admin/providers", Some(json!({ "name": name }))).await;
        v["apiKey"].as_str().unwrap().to_owned()
    }
}

#[tokio::test]
async fn missing_or_unknown_key_is_401() {
    let c = Client::new();
    let (status, body, _) = c.call(None, Method::GET, "/me", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["error"], "Unauthenticated");
    let (status, _, _) = c.call(Some("dk_bogus"), Method::GET, "/patients/p-1/records", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let me = c.ok("dash-admin", Method::GET, "/me", None).await;
    assert_eq!(me["role"], "admin");
}

#[tokio::test]
async fn responses_are_canonical_json() {
    let c = Client::new();
    c.onboard("p-1").await;
    let (_, value, raw) = c.call(Some("dash-admin"), Method::GET, "/chain/blocks/1", None).await;
    assert_eq!(raw, canonical::to_vec(&value).unwrap());
}

#[tokio::test]
async fn unpermissioned_write_reports_revert_reason() {
    let c = Client::new();
    c.onboard("p-1").await;
    let dr = c.provider("dr-x").await;
    let obs = serde_json::to_value(observation("p-1", "o1", 1)).unwrap();
    let (status, body, _) = c.call(Some(&dr), Method::POST, "/patients/p-1/records", Some(obs)).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(body["error"], "Unauthorized");
    assert!(body["revertReason"].as_str().unwrap().starts_with("Unauthorized:"));
    assert!(body["message"].is_string());
}

#[tokio::test]
async fn bad_bodies_and_paths() {
    let c = Client::new();
    let (status, body, _) = c.call(Some("dash-admin"), Method::POST, "/admin/patients", Some(json!({ "nope": 1 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "BadRequest");
    let (status, body, _) = c.call(Some("dash-admin"), Method::GET, "/no/such/thing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "NotFound");
    let (status, _, _) = c.call(Some("dash-admin"), Method::GET, "/chain/receipts/xyz", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _, _) = c.call(Some("dash-admin"), Method::GET, "/chain/blocks/999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn write_then_read_over_http() {
    let c = Client::new();
    let pk = c.onboard("p-1").await;
    let dr = c.provider("dr-a").await;
    c.ok(&pk, Method::POST, "/patients/p-1/permissions", Some(json!({ "provider": "dr-a", "action": "grant" }))).await;
    let obs = serde_json::to_value(observation("p-1", "o1", 1)).unwrap();
    let w = c.ok(&dr, Method::POST, "/patients/p-1/records", Some(obs.clone())).await;
    assert_eq!(w["entryIndex"], 1);
    let tx = w["receipt"]["txId"].as_str().unwrap();
    let r = c.ok(&dr, Method::GET, &format!("/chain/receipts/{tx}"), None).await;
    assert_eq!(r, w["receipt"]);
    let records = c.ok(&dr, Method::GET, "/patients/p-1/records", None).await;
    assert_eq!(records.as_array().unwrap().len(), 2);
    assert_eq!(records[1]["resource"], obs);
    let v = c.ok(&pk, Method::GET, "/chain/validate", None).await;
    assert_eq!(v["valid"], true);
}

#[tokio::test]
async fn long_poll_wakes_on_new_notification() {
    let c = Client::new();
    let pk = c.onboard("p-1").await;
    let dr = c.provider("dr-a").await;
    c.ok(&dr, Method::POST, "/providers/subscriptions", Some(json!({ "topic": "PrescriptionRequested" }))).await;
    let empty = c.ok(&dr, Method::GET, "/providers/notifications", None).await;
    assert_eq!(empty["notifications"], json!([]));

    let started = std::time::Instant::now();
    let waiter = {
        let app = c.app.clone();
        let dr = dr.clone();
        tokio::spawn(async move {
            let req = Request::get("/providers/notifications?after=-1&wait=30")
                .header(header::AUTHORIZATION, format!("Bearer {dr}"))
                .body(Body::empty())
                .unwrap();
            let resp = app.oneshot(req).await.unwrap();
            let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
            serde_json::from_slice::<Value>(&bytes).unwrap()
        })
    };
    tokio::time::sleep(Duration::from_millis(100)).await;
    c.ok(&pk, Method::POST, "/patients/p-1/prescriptions", Some(json!({ "medicationCode": "RX-1" }))).await;
    let feed = tokio::time::timeout(Duration::from_secs(10), waiter).await.unwrap().unwrap();
    assert!(started.elapsed() < Duration::from_secs(10));
    assert_eq!(feed["notifications"].as_array().unwrap().len(), 1);
    assert_eq!(feed["notifications"][0]["event"]["topic"], "PrescriptionRequested");
    assert_eq!(feed["latestSeq"], 0);

    let after = c.ok(&dr, Method::GET, "/providers/notifications?after=0", None).await;
    assert_eq!(after["notifications"], json!([]));
}

#[tokio::test]
async fn long_poll_times_out_empty() {
    let c = Client::new();
    let dr = c.provider("dr-a").await;
    let started = std::time::Instant::now();
    let feed = c.ok(&dr, Method::GET, "/providers/notifications?wait=1", None).await;
    assert!(started.elapsed() >= Duration::from_millis(900));
    assert_eq!(feed["notifications"], json!([]));
}

const SCRIPT: &str = r#"
{"step":1,"actorKey":"admin","method":"POST","path":"/admin/providers","body":{"name":"dr-a"}}
{"step":2,"actorKey":"admin","method":"POST","path":"/admin/providers","body":{"name":"dr-b"}}
{"step":3,"actorKey":"provider:dr-a","method":"POST","path":"/providers/subscriptions","body":{"topic":"PrescriptionRequested"}}
{"step":4,"actorKey":"admin","method":"POST","path":"/admin/patients","body":{"patientId":"p-1","demographics":{"resourceType":"Patient","id":"p-1","subjectPatientId":"p-1","attributes":{"name":"Ada","birthDate":"1970-01-01"},"authoredAt":1700000000},"plan":{"payerName":"Acme","planCode":"PPO-1","coverageTier":"gold"},"extrinsic":{"memberNumber":"M-1","groupCode":"G-1"}}}
{"step":5,"actorKey":"patient:p-1","method":"POST","path":"/patients/p-1/permissions","body":{"provider":"dr-a","action":"grant"}}
{"step":6,"actorKey":"provider:dr-b","method":"POST","path":"/patients/p-1/records","body":{"resourceType":"Observation","id":"o-1","subjectPatientId":"p-1","attributes":{"code":"8867-4","value":72},"authoredAt":1700000000}}
{"step":7,"actorKey":"patient:p-1","method":"POST","path":"/patients/p-1/prescriptions","body":{"medicationCode":"RX-9"}}
{"step":8,"actorKey":"provider:dr-a","method":"GET","path":"/providers/notifications"}
{"step":9,"actorKey":"provider:dr-a","method":"POST","path":"/patients/p-1/prescriptions/0/fulfill","body":{"resourceType":"MedicationRequest","id":"mr-1","subjectPatientId":"p-1","attributes":{"medicationCode":"RX-9","status":"completed"},"authoredAt":1700000000}}
{"step":10,"actorKey":"patient:p-1","method":"GET","path":"/patients/p-1/records"}
"#;

#[test]
fn scenario_replay_is_deterministic() {
    let steps = scenario::parse_script(SCRIPT).unwrap();
    let run = || {
        let state = AppState::new(Service::open(config()).unwrap());
        scenario::run_blocking(&state, &steps).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(canonical::to_vec(&a).unwrap(), canonical::to_vec(&b).unwrap());

    let statuses: Vec<u16> = a.steps.iter().map(|s| s.status).collect();
    assert_eq!(statuses, [200, 200, 200, 200, 200, 403, 200, 200, 200, 200]);
    assert_eq!(a.failed_steps, 1);
    assert_eq!(a.reverted_receipts, 1);
    assert_eq!(a.steps[7].body["notifications"].as_array().unwrap().len(), 1);
    let ids: Vec<_> = a.steps[9].body.as_array().unwrap().iter().map(|r| r["resource"]["id"].clone()).collect();
    assert_eq!(ids, [json!("p-1"), json!("mr-1")]);
}

#[test]
fn scenario_parse_errors_name_the_line() {
    let err = scenario::parse_script("\n{\"step\":1}\n").unwrap_err();
    assert!(err.to_string().starts_with("line 2:"), "{err}");
}

#[tokio::test]
async fn persistent_state_survives_restart_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig {
        data_dir: Some(dir.path().into()),
        record_backend: dash_core::recordstore::BackendKind::File,
        ..config()
    };
    let pk = {
        let c = Client::with_config(cfg.clone());
        c.onboard("p-1").await
    };
    let c = Client::with_config(cfg);
    let records = c.ok(&pk, Method::GET, "/patients/p-1/records", None).await;
    assert_eq!(records.as_array().unwrap().len(), 1);
    assert_eq!(c.state.service().lock().chain().height(), Some(3));
}
