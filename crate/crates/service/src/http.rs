//! JSON-over-HTTP front end. Every handler takes the service lock, runs one
//! workflow to completion, and releases it; nothing awaits while holding it.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::Router;
use dash_core::canonical;
use dash_core::pubsub::Filter;
use dash_core::recordstore::Resource;
use dash_core::Digest;
use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Notify;

use crate::identity::Identity;
use crate::service::{OnboardRequest, PermissionRequest, PrescriptionBody, ProviderRequest};
use crate::{Service, ServiceConfig, ServiceError};

/// Longest honoured `?wait=` in seconds.
pub const MAX_WAIT_SECS: u64 = 60;

#[derive(Clone)]
pub struct AppState {
    service: Arc<Mutex<Service>>,
    /// Woken after every mutating request, for long-polling readers.
    changed: Arc<Notify>,
}

impl AppState {
    pub fn new(service: Service) -> Self {
        AppState { service: Arc::new(Mutex::new(service)), changed: Arc::new(Notify::new()) }
    }

    pub fn service(&self) -> &Arc<Mutex<Service>> {
        &self.service
    }

    fn run<T: Serialize>(
        &self,
        headers: &HeaderMap,
        mutates: bool,
        f: impl FnOnce(&mut Service, Identity) -> Result<T, ServiceError>,
    ) -> Response {
        let result = {
            let mut svc = self.service.lock();
            api_key(headers).and_then(|k| svc.authenticate(k)).and_then(|id| f(&mut svc, id))
        };
        if mutates {
            self.changed.notify_waiters();
        }
        match result {
            Ok(v) => json_response(StatusCode::OK, &v),
            Err(e) => error_response(&e),
        }
    }
}

fn api_key(headers: &HeaderMap) -> Result<&str, ServiceError> {
    let raw = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .ok_or(ServiceError::Unauthenticated)?;
    Ok(raw.strip_prefix("Bearer ").unwrap_or(raw).trim())
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("body: {e}")))
}

/// Responses are canonical JSON so clients can hash them directly.
fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match canonical::to_vec(value) {
        Ok(bytes) => {
            let mut r = (status, bytes).into_response();
            r.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
            r
        }
        Err(e) => error_response(&ServiceError::Internal(e.to_string())),
    }
}

pub fn error_response(e: &ServiceError) -> Response {
    let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut body = json!({ "error": e.code(), "message": e.to_string() });
    if let Some(reason) = e.revert_reason() {
        body["revertReason"] = json!(reason);
    }
    json_response(status, &body)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/me", get(me))
        .route("/admin/patients", post(onboard))
        .route("/admin/providers", post(create_provider))
        .route("/admin/mine", post(mine))
        .route("/patients/{id}/records", get(read_records).post(write_record))
        .route("/patients/{id}/permissions", get(list_permissions).post(set_permission))
        .route("/patients/{id}/prescriptions", get(list_prescriptions).post(request_prescription))
        .route("/patients/{id}/prescriptions/{rid}/fulfill", post(fulfill))
        .route("/providers/subscriptions", get(list_subscriptions).post(subscribe))
        .route("/providers/subscriptions/{sid}", delete(unsubscribe))
        .route("/providers/notifications", get(notifications))
        .route("/chain/blocks/{height}", get(block))
        .route("/chain/validate", get(validate))
        .route("/chain/receipts/{tx_id}", get(receipt))
        .fallback(|| async { error_response(&ServiceError::NotFound("no such endpoint".into())) })
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let listen = config.listen;
    let service = tokio::task::spawn_blocking(move || Service::open(config))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    let listener = tokio::net::TcpListener::bind(listen).await.map_err(|e| ServiceError::Internal(format!("bind {listen}: {e}")))?;
    tracing::info!(%listen, "serving");
    axum::serve(listener, router(AppState::new(service)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))
}

async fn me(State(app): State<AppState>, headers: HeaderMap) -> Response {
    app.run(&headers, false, |_, id| Ok(id))
}

async fn onboard(State(app): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    app.run(&headers, true, |svc, id| {
        let req: OnboardRequest = parse(&body)?;
        svc.onboard_patient(&id, req)
    })
}

async fn create_provider(State(app): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    app.run(&headers, true, |svc, id| svc.create_provider(&id, parse::<ProviderRequest>(&body)?))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct MineBody {
    max_txs: Option<usize>,
}

async fn mine(State(app): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    app.run(&headers, true, |svc, id| {
        let b: MineBody = if body.is_empty() { MineBody::default() } else { parse(&body)? };
        svc.mine(&id, b.max_txs)
    })
}

async fn read_records(State(app): State<AppState>, headers: HeaderMap, Path(pid): Path<String>) -> Response {
    // may auto-create the account, so it counts as a mutation
    app.run(&headers, true, |svc, id| svc.read_records(&id, &pid))
}

async fn write_record(State(app): State<AppState>, headers: HeaderMap, Path(pid): Path<String>, body: Bytes) -> Response {
    app.run(&headers, true, |svc, id| svc.write_record(&id, &pid, parse::<Resource>(&body)?))
}

async fn list_permissions(State(app): State<AppState>, headers: HeaderMap, Path(pid): Path<String>) -> Response {
    app.run(&headers, false, |svc, id| svc.list_providers(&id, &pid))
}

async fn set_permission(State(app): State<AppState>, headers: HeaderMap, Path(pid): Path<String>, body: Bytes) -> Response {
    app.run(&headers, true, |svc, id| svc.set_permission(&id, &pid, parse::<PermissionRequest>(&body)?))
}

async fn list_prescriptions(State(app): State<AppState>, headers: HeaderMap, Path(pid): Path<String>) -> Response {
    app.run(&headers, false, |svc, id| svc.list_prescriptions(&id, &pid))
}

async fn request_prescription(
    State(app): State<AppState>,
    headers: HeaderMap,
    Path(pid): Path<String>,
    body: Bytes,
) -> Response {
    app.run(&headers, true, |svc, id| svc.request_prescription(&id, &pid, parse::<PrescriptionBody>(&body)?))
}

async fn fulfill(
    State(app): State<AppState>,
    headers: HeaderMap,
    Path((pid, rid)): Path<(String, u64)>,
    body: Bytes,
) -> Response {
    app.run(&headers, true, |svc, id| svc.fulfill_prescription(&id, &pid, rid, parse::<Resource>(&body)?))
}

async fn list_subscriptions(State(app): State<AppState>, headers: HeaderMap) -> Response {
    app.run(&headers, false, |svc, id| svc.subscriptions(&id))
}

async fn subscribe(State(app): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    app.run(&headers, true, |svc, id| svc.subscribe(&id, parse::<Filter>(&body)?))
}

async fn unsubscribe(State(app): State<AppState>, headers: HeaderMap, Path(sid): Path<String>) -> Response {
    app.run(&headers, true, |svc, id| svc.unsubscribe(&id, &sid))
}

#[derive(Debug, Deserialize)]
struct FeedQuery {
    after: Option<i64>,
    wait: Option<u64>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Feed {
    notifications: Vec<dash_core::pubsub::Notification>,
    latest_seq: Option<u64>,
}

async fn notifications(State(app): State<AppState>, headers: HeaderMap, Query(q): Query<FeedQuery>) -> Response {
    let after = q.after.unwrap_or(-1);
    let deadline = tokio::time::Instant::now() + Duration::from_secs(q.wait.unwrap_or(0).min(MAX_WAIT_SECS));
    loop {
        let changed = app.changed.notified();
        tokio::pin!(changed);
        changed.as_mut().enable();
        let result = {
            let svc = app.service.lock();
            api_key(&headers).and_then(|k| svc.authenticate(k)).and_then(|id| {
                let notifications = svc.notifications(&id, after)?;
                let latest_seq = svc.dispatcher().latest_seq(&id.eoa_label);
                Ok(Feed { notifications, latest_seq })
            })
        };
        match result {
            Ok(feed) if !feed.notifications.is_empty() || tokio::time::Instant::now() >= deadline => {
                return json_response(StatusCode::OK, &feed)
            }
            Ok(_) => {
                if tokio::time::timeout_at(deadline, changed).await.is_err() {
                    // one last look after the deadline
                    continue;
                }
            }
            Err(e) => return error_response(&e),
        }
    }
}

async fn block(State(app): State<AppState>, headers: HeaderMap, Path(height): Path<u64>) -> Response {
    app.run(&headers, false, |svc, _| svc.block(height))
}

async fn validate(State(app): State<AppState>, headers: HeaderMap) -> Response {
    app.run(&headers, false, |svc, _| Ok(svc.validate()))
}

async fn receipt(State(app): State<AppState>, headers: HeaderMap, Path(tx_id): Path<String>) -> Response {
    app.run(&headers, false, |svc, _| {
        let id: Digest = tx_id.parse().map_err(|_| ServiceError::BadRequest(format!("{tx_id:?} is not a digest")))?;
        svc.receipt(&id)
    })
}
