//! Replays a JSON-lines script of API calls against an in-process router.
//!
//! Each line is `{step, actorKey, method, path, body}`. `actorKey` may be
//! an API key or an identity label such as `admin` or `provider:dr-a`; labels
//! are resolved when the step runs, so scripts need not embed keys.

use axum::body::Body;
use axum::http::{header, Method, Request};
use dash_core::canonical;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower::ServiceExt;

use crate::http::{router, AppState};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("step {step}: {message}")]
    Transport { step: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Step {
    pub step: Value,
    #[serde(default)]
    pub actor_key: Option<String>,
    pub method: String,
    pub path: String,
    #[serde(default)]
    pub body: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StepResult {
    pub step: Value,
    pub status: u16,
    pub body: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioReport {
    pub steps: Vec<StepResult>,
    pub failed_steps: usize,
    pub height: Option<u64>,
    pub receipts: usize,
    pub reverted_receipts: usize,
}

/// Parses a script; blank lines are skipped.
pub fn parse_script(text: &str) -> Result<Vec<Step>, ScenarioError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| ScenarioError::Parse { line: i + 1, message: e.to_string() }))
        .collect()
}

pub async fn run(state: &AppState, steps: &[Step]) -> Result<ScenarioReport, ScenarioError> {
    let app = router(state.clone());
    let mut results = Vec::with_capacity(steps.len());
    for s in steps {
        let transport = |message: String| ScenarioError::Transport { step: s.step.to_string(), message };
        let method = Method::from_bytes(s.method.to_ascii_uppercase().as_bytes()).map_err(|e| transport(e.to_string()))?;
        let mut req = Request::builder().method(method).uri(&s.path);
        if let Some(actor) = &s.actor_key {
            let key = {
                let svc = state.service().lock();
                svc.identities().by_label(actor).map_or_else(|| actor.clone(), |i| i.api_key.clone())
            };
            req = req.header(header::AUTHORIZATION, format!("Bearer {key}"));
        }
        let body = match &s.body {
            Some(v) => Body::from(canonical::encode_value(v).map_err(|e| transport(e.to_string()))?),
            None => Body::empty(),
        };
        let req = req.header(header::CONTENT_TYPE, "application/json").body(body).map_err(|e| transport(e.to_string()))?;
        let resp = app.clone().oneshot(req).await.map_err(|e| transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.map_err(|e| transport(e.to_string()))?;
        let body = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()))
        };
        results.push(StepResult { step: s.step.clone(), status, body });
    }

    let svc = state.service().lock();
    let chain = svc.chain();
    let reverted_receipts = chain
        .height()
        .map_or(0, |tip| (0..=tip).flat_map(|h| chain.block_receipts(h)).filter(|r| !r.status.is_success()).count());
    Ok(ScenarioReport {
        failed_steps: results.iter().filter(|r| r.status >= 400).count(),
        steps: results,
        height: chain.height(),
        receipts: chain.receipt_count(),
        reverted_receipts,
    })
}

/// [`run`] on a private single-threaded runtime.
pub fn run_blocking(state: &AppState, steps: &[Step]) -> Result<ScenarioReport, ScenarioError> {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .expect("tokio runtime")
        .block_on(run(state, steps))
}
