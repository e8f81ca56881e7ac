//! HTTP + JSON surface of the session store.
//!
//! | method | path | |
//! |---|---|---|
//! | GET  | `/health` | liveness |
//! | POST | `/sessions` | create from a design |
//! | GET  | `/sessions` | list, `?status=&limit=&page_token=` |
//! | GET  | `/sessions/{id}` | full record with LR trajectory |
//! | POST | `/sessions/{id}/observations` | `{value, expected_version}` |
//! | GET  | `/sessions/{id}/export.csv` | observation log as CSV |

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use lrtrial_core::{DesignParams, FieldError, Status, TrialDesign};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;

use crate::store::{Observation, SessionId, SessionRecord, SessionStore, StoreError, TrajectoryPoint};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: SessionId,
    pub version: u64,
    pub created_at: DateTime<Utc>,
    pub design: TrialDesign,
    pub n: u64,
    pub status: Status,
    pub theta_obs: Option<f64>,
    pub se: Option<f64>,
    pub log_lr: Option<f64>,
    pub lr: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub observations: Vec<Observation>,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl From<SessionRecord> for SessionView {
    fn from(r: SessionRecord) -> Self {
        let lr = r.state.lr();
        let ci = r.state.confidence_interval().ok();
        Self {
            session_id: r.session_id,
            version: r.version(),
            created_at: r.created_at,
            n: r.state.n(),
            status: r.state.status(),
            theta_obs: r.state.theta_obs(),
            se: r.state.se(),
            log_lr: lr.map(|l| l.log_value()),
            lr: lr.map(|l| l.value()),
            ci_lower: ci.map(|c| c.0),
            ci_upper: ci.map(|c| c.1),
            design: r.design,
            observations: r.observations,
            trajectory: r.trajectory,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: SessionId,
    pub created_at: DateTime<Utc>,
    pub label: String,
    pub version: u64,
    pub n: u64,
    pub status: Status,
    pub log_lr: Option<f64>,
    pub lr: Option<f64>,
}

impl From<&SessionRecord> for SessionSummary {
    fn from(r: &SessionRecord) -> Self {
        let lr = r.state.lr();
        Self {
            session_id: r.session_id,
            created_at: r.created_at,
            label: r.design.label().to_string(),
            version: r.version(),
            n: r.state.n(),
            status: r.state.status(),
            log_lr: lr.map(|l| l.log_value()),
            lr: lr.map(|l| l.value()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionList {
    pub sessions: Vec<SessionSummary>,
    pub next_page_token: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewObservation {
    pub value: f64,
    pub expected_version: u64,
}

#[derive(Debug, Deserialize)]
pub struct ListQuery {
    status: Option<Status>,
    limit: Option<usize>,
    page_token: Option<String>,
}

/// Error body: `{"error": kind, "message": ..., ...}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn validation(fields: Vec<FieldError>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "error": "validation", "message": "validation failed", "fields": fields }),
        }
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            body: json!({ "error": "not_found", "message": format!("{what} not found") }),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::NotFound(id) => Self::not_found(format!("session {id}")),
            StoreError::Stopped(status) => Self {
                status: StatusCode::CONFLICT,
                body: json!({
                    "error": "stopped",
                    "message": format!("trial already stopped ({status}); no further observations are accepted"),
                    "stop_status": status,
                }),
            },
            StoreError::VersionConflict { expected, actual } => Self {
                status: StatusCode::CONFLICT,
                body: json!({
                    "error": "version_conflict",
                    "message": message,
                    "expected_version": expected,
                    "current_version": actual,
                }),
            },
            StoreError::Validation(fields) => Self::validation(fields),
            StoreError::BadPageToken(_) => Self::validation(vec![FieldError::new("page_token", message)]),
            StoreError::Corrupt { .. } | StoreError::Io(_) => {
                tracing::error!(error = %message, "storage failure");
                Self {
                    status: StatusCode::INTERNAL_SERVER_ERROR,
                    body: json!({ "error": "storage", "message": message }),
                }
            }
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::validation(vec![FieldError::new("body", r.body_text())])
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::validation(vec![FieldError::new("query", r.body_text())])
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type Shared = Arc<SessionStore>;

fn parse_id(raw: &str) -> Result<SessionId, ApiError> {
    raw.parse().map_err(|_| ApiError::not_found(format!("session {raw}")))
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_session(
    State(store): State<Shared>,
    body: Result<Json<DesignParams>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let Json(params) = body?;
    let record = store.create_session(params)?;
    Ok((StatusCode::CREATED, Json(record.into())))
}

async fn list_sessions(
    State(store): State<Shared>,
    query: Result<Query<ListQuery>, QueryRejection>,
) -> Result<Json<SessionList>, ApiError> {
    let Query(q) = query?;
    let page = store.list_sessions(q.status, q.limit, q.page_token.as_deref())?;
    Ok(Json(SessionList {
        sessions: page.sessions.iter().map(SessionSummary::from).collect(),
        next_page_token: page.next_page_token,
    }))
}

async fn get_session(State(store): State<Shared>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let record = store.get_session(parse_id(&id)?)?;
    Ok(Json(record.into()))
}

async fn post_observation(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<NewObservation>, JsonRejection>,
) -> Result<Json<SessionView>, ApiError> {
    let id = parse_id(&id)?;
    let Json(obs) = body?;
    let record = store.post_observation(id, obs.value, obs.expected_version)?;
    Ok(Json(record.into()))
}

async fn export_csv(State(store): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = store.export_session_csv(parse_id(&id)?)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], bytes).into_response())
}

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/observations", post(post_observation))
        .route("/sessions/{id}/export.csv", get(export_csv))
        .with_state(store)
}

/// Serves until `shutdown` resolves, then flushes every event log.
pub async fn serve<F>(listener: TcpListener, store: Shared, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    tracing::info!(addr = ?listener.local_addr().ok(), "listening");
    axum::serve(listener, router(store.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    store.flush().map_err(std::io::Error::other)?;
    Ok(())
}
