use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::session::{Deployment, Session};
use crate::{AppState, API_SCHEMA};

type Shared = State<Arc<AppState>>;
type Reply = Result<Json<Value>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/validation", get(validation_items))
        .route("/sessions/{id}/validation/{sample_id}", put(submit_label))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/test", get(test_items))
        .route("/sessions/{id}/cooperate", post(cooperate))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/close", post(close))
        .with_state(state)
}

/// Wraps a payload with the schema tag.
fn reply<T: Serialize>(payload: T) -> Reply {
    let mut value = serde_json::to_value(payload).map_err(|e| ApiError::internal(e.to_string()))?;
    match value.as_object_mut() {
        Some(map) => {
            map.insert("schema".into(), Value::from(API_SCHEMA));
            Ok(Json(value))
        }
        None => Ok(Json(json!({ "schema": API_SCHEMA, "data": value }))),
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError>
where
    T: HasSchema,
{
    let Json(inner) = payload.map_err(|e| ApiError::bad_request(e.body_text()))?;
    match inner.schema() {
        Some(s) if s != API_SCHEMA => Err(ApiError::bad_request(format!("unsupported schema `{s}`"))),
        _ => Ok(inner),
    }
}

trait HasSchema {
    fn schema(&self) -> Option<&str>;
}

macro_rules! request {
    ($name:ident { $($field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Debug, Deserialize)]
        struct $name {
            #[serde(default)]
            schema: Option<String>,
            $($field: $ty),*
        }

        impl HasSchema for $name {
            fn schema(&self) -> Option<&str> {
                self.schema.as_deref()
            }
        }
    };
}

request!(CreateRequest { user_id: String });
request!(LabelRequest { label: usize });
request!(CooperateRequest { sample_id: String, user_label: usize });

fn lock(session: &Mutex<Session>) -> MutexGuard<'_, Session> {
    session.lock().unwrap_or_else(|p| p.into_inner())
}

fn with_session<R>(
    state: &AppState,
    id: &str,
    f: impl FnOnce(&mut Session, &Deployment) -> Result<R, ApiError>,
) -> Result<R, ApiError> {
    let dep = state.deployment()?;
    let session = state.session(id)?;
    let mut guard = lock(&session);
    f(&mut guard, dep)
}

async fn health(State(state): Shared) -> Reply {
    reply(json!({
        "status": "ok",
        "bundle_loaded": state.deployment().is_ok(),
        "sessions": state.session_count(),
    }))
}

async fn create_session(State(state): Shared, payload: Result<Json<CreateRequest>, JsonRejection>) -> Result<(StatusCode, Json<Value>), ApiError> {
    let req = body(payload)?;
    let dep = state.deployment()?;
    if req.user_id.trim().is_empty() {
        return Err(ApiError::bad_request("user_id must not be empty"));
    }
    let session = state.open_session(&req.user_id);
    let guard = lock(&session);
    let out = reply(json!({
        "session_id": guard.id,
        "user_id": guard.user_id,
        "phase": guard.phase(),
        "class_count": dep.class_count(),
        "items": guard.validation_manifest(dep),
    }))?;
    tracing::info!(session = %guard.id, user = %guard.user_id, "session opened");
    Ok((StatusCode::CREATED, out))
}

async fn get_session(State(state): Shared, Path(id): Path<String>) -> Reply {
    reply(with_session(&state, &id, |s, dep| s.view(dep))?)
}

async fn validation_items(State(state): Shared, Path(id): Path<String>) -> Reply {
    let (items, view) = with_session(&state, &id, |s, dep| Ok((s.validation_manifest(dep), s.view(dep)?)))?;
    reply(json!({
        "session_id": id,
        "phase": view.phase,
        "items": items,
        "labels": view.labels,
        "remaining": view.remaining,
    }))
}

async fn submit_label(
    State(state): Shared,
    Path((id, sample_id)): Path<(String, String)>,
    payload: Result<Json<LabelRequest>, JsonRejection>,
) -> Reply {
    let req = body(payload)?;
    let progress = with_session(&state, &id, |s, dep| s.submit_label(dep, &sample_id, req.label))?;
    reply(json!({
        "session_id": id,
        "sample_id": sample_id,
        "label": req.label,
        "submitted": progress.submitted,
        "remaining": progress.remaining,
        "overwritten": progress.overwritten,
    }))
}

async fn finalize(State(state): Shared, Path(id): Path<String>) -> Reply {
    let (result, phase) = with_session(&state, &id, |s, dep| {
        let result = s.finalize(dep)?.clone();
        Ok((result, s.phase()))
    })?;
    tracing::info!(session = %id, profile = result.assigned_profile, accepted = result.accepted, "onboarding finalized");
    reply(json!({ "session_id": id, "phase": phase, "result": result }))
}

async fn test_items(State(state): Shared, Path(id): Path<String>) -> Reply {
    let items = with_session(&state, &id, |s, dep| s.test_manifest(dep))?;
    reply(json!({ "session_id": id, "items": items }))
}

async fn cooperate(State(state): Shared, Path(id): Path<String>, payload: Result<Json<CooperateRequest>, JsonRejection>) -> Reply {
    let req = body(payload)?;
    let (step, stats, mode) = with_session(&state, &id, |s, dep| {
        let step = s.cooperate(dep, &req.sample_id, req.user_label)?;
        Ok((step, s.stats(dep)?, s.mode(dep)))
    })?;
    if step.altered {
        tracing::debug!(session = %id, sample = %step.sample_id, from = step.user_label, to = step.prediction, "alteration");
    }
    reply(json!({ "session_id": id, "mode": mode, "step": step, "stats": stats }))
}

async fn report(State(state): Shared, Path(id): Path<String>) -> Reply {
    reply(with_session(&state, &id, |s, dep| s.report(dep))?)
}

async fn close(State(state): Shared, Path(id): Path<String>) -> Reply {
    let report = with_session(&state, &id, |s, dep| s.close(dep))?;
    state.export(&report)?;
    reply(report)
}
