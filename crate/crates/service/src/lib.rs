//! HTTP/JSON service for live choice-based optimisation sessions.
//!
//! Routes (all under `/v1`):
//!
//! | method | path | success |
//! |---|---|---|
//! | POST | `/sessions` | 201, new session and its first query |
//! | GET | `/sessions` | 200, session ids |
//! | GET | `/sessions/{id}/query` | 200, pending query (409 if none) |
//! | POST | `/sessions/{id}/choice` | 202, fit runs in the background |
//! | GET | `/sessions/{id}/state` | 200, session snapshot |
//! | GET | `/sessions/{id}/pareto` | 200, Pareto estimate (409 before the first fit) |

mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use choicebo_core::domain::{ChoiceObservation, OptionPoint};
use choicebo_core::mobo::{BoSession, IterationRecord, ParetoEstimate, PendingQuery, SessionConfig, SessionState};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use store::{valid_id, Entry, SessionStore, SharedEntry};

pub const ENV_DATA_DIR: &str = "CHOICEBO_DATA_DIR";
pub const ENV_BIND_ADDR: &str = "CHOICEBO_BIND_ADDR";
pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "choicebo-data";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("session '{0}' not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] choicebo_core::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            Self::BadRequest(_) => StatusCode::BAD_REQUEST,
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Conflict(_) => StatusCode::CONFLICT,
            Self::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Self::Io(_) | Self::Json(_) | Self::Core(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;

/// Where sessions live and which address to listen on.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
}

impl ServiceConfig {
    /// Reads `CHOICEBO_DATA_DIR` and `CHOICEBO_BIND_ADDR`, falling back to
    /// the defaults.
    pub fn from_env() -> Result<Self, ServiceError> {
        let data_dir = std::env::var(ENV_DATA_DIR).unwrap_or_else(|_| DEFAULT_DATA_DIR.into());
        let bind = std::env::var(ENV_BIND_ADDR).unwrap_or_else(|_| DEFAULT_BIND_ADDR.into());
        let bind = bind
            .parse()
            .map_err(|e| ServiceError::BadRequest(format!("invalid bind address '{bind}': {e}")))?;
        Ok(Self { data_dir: data_dir.into(), bind })
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
}

impl AppState {
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        Ok(Self { store: Arc::new(SessionStore::open(data_dir)?) })
    }

    /// Restarts background fits for sessions persisted mid-fit.
    pub fn resume_fitting(&self) {
        for id in self.store.ids() {
            let entry = self.store.get(&id).expect("listed id");
            let snapshot = {
                let e = entry.lock().expect("entry lock");
                (e.session.state == SessionState::Fitting).then(|| e.session.clone())
            };
            if let Some(s) = snapshot {
                log::info!("resuming fit for session {id}");
                spawn_fit(self.store.clone(), entry, s);
            }
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}/query", get(get_query))
        .route("/v1/sessions/{id}/choice", post(post_choice))
        .route("/v1/sessions/{id}/state", get(get_state))
        .route("/v1/sessions/{id}/pareto", get(get_pareto))
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::open(&config.data_dir)?;
    state.resume_fitting();
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    log::info!("listening on {} (data in {})", listener.local_addr()?, config.data_dir.display());
    axum::serve(listener, router(state)).await?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    id: Option<String>,
    #[serde(flatten)]
    config: SessionConfig,
}

#[derive(Debug, Deserialize)]
struct ChoiceRequest {
    seq: u64,
    chosen: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct QueryOption<'a> {
    id: usize,
    coords: &'a [f64],
    /// Opaque rendering hint; the service never fills it.
    display_payload: Value,
}

#[derive(Debug, Serialize)]
struct QueryPayload<'a> {
    session_id: &'a str,
    seq: u64,
    kind: choicebo_core::mobo::QueryKind,
    short: bool,
    options: Vec<QueryOption<'a>>,
}

fn query_payload<'a>(s: &'a BoSession, q: &'a PendingQuery) -> QueryPayload<'a> {
    QueryPayload {
        session_id: &s.id,
        seq: q.seq,
        kind: q.kind,
        short: q.short,
        options: q
            .ids
            .iter()
            .map(|&i| QueryOption { id: i, coords: &s.options[i].coords, display_payload: Value::Null })
            .collect(),
    }
}

#[derive(Debug, Serialize)]
struct StateView<'a> {
    id: &'a str,
    state: SessionState,
    config: &'a SessionConfig,
    n_e: Option<usize>,
    pending_query: Option<&'a PendingQuery>,
    options: &'a [OptionPoint],
    /// Choices received so far, oldest first.
    history: &'a [ChoiceObservation],
    iterations: &'a [IterationRecord],
    fits: usize,
    pareto_available: bool,
    last_error: Option<&'a str>,
    created_at: &'a str,
    updated_at: &'a str,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("malformed body: {e}")))
}

fn entry(state: &AppState, id: &str) -> ApiResult<SharedEntry> {
    state.store.get(id).ok_or_else(|| ServiceError::NotFound(id.to_string()))
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: CreateSession = parse_body(&body)?;
    let id = match req.id {
        Some(id) if !valid_id(&id) => {
            return Err(ServiceError::BadRequest("id must be 1-64 characters of [A-Za-z0-9_-]".into()))
        }
        Some(id) => id,
        None => format!("s{:016x}", rand::random::<u64>()),
    };
    if state.store.get(&id).is_some() {
        return Err(ServiceError::Conflict(format!("session '{id}' already exists")));
    }
    let session = BoSession::new(id, req.config).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let entry = state.store.insert(session)?;
    let e = entry.lock().expect("entry lock");
    let s = &e.session;
    let query = s.pending_query.as_ref().map(|q| query_payload(s, q));
    Ok((StatusCode::CREATED, Json(json!({ "id": s.id, "state": s.state, "query": query }))))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Value> {
    Json(json!({ "sessions": state.store.ids() }))
}

async fn get_query(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let entry = entry(&state, &id)?;
    let e = entry.lock().expect("entry lock");
    let s = &e.session;
    match (&s.state, &s.pending_query) {
        (SessionState::AwaitingChoice, Some(q)) => Ok(Json(serde_json::to_value(query_payload(s, q))?)),
        (st, _) => Err(ServiceError::Conflict(format!("no pending query (state {})", state_name(*st)))),
    }
}

async fn post_choice(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let entry = entry(&state, &id)?;
    let req: ChoiceRequest = parse_body(&body)?;
    let snapshot = {
        let mut e = entry.lock().expect("entry lock");
        if e.session.state != SessionState::AwaitingChoice || e.session.pending_query.is_none() {
            return Err(ServiceError::Conflict(format!(
                "no pending query (state {})",
                state_name(e.session.state)
            )));
        }
        let mut next = e.session.clone();
        next.submit_choice(req.seq, &req.chosen)
            .map_err(|err| ServiceError::Unprocessable(err.to_string()))?;
        state.store.persist(&next)?;
        e.session = next.clone();
        e.last_error = None;
        next
    };
    let body = json!({ "accepted": req.seq, "state": snapshot.state });
    spawn_fit(state.store.clone(), entry, snapshot);
    Ok((StatusCode::ACCEPTED, Json(body)))
}

/// Runs the `Fitting` work off the async runtime. The session cannot take
/// another choice until this finishes, so one fit runs per session at a
/// time.
fn spawn_fit(store: Arc<SessionStore>, entry: SharedEntry, mut session: BoSession) {
    tokio::task::spawn_blocking(move || {
        let outcome = session.advance(None);
        let mut e = entry.lock().expect("entry lock");
        match outcome {
            Ok(()) => {
                if let Err(err) = store.persist(&session) {
                    log::error!("persisting session {}: {err}", session.id);
                }
                e.session = session;
                e.last_error = None;
            }
            Err(err) => {
                log::error!("fit failed for session {}: {err}", session.id);
                e.last_error = Some(err.to_string());
            }
        }
    });
}

async fn get_state(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let entry = entry(&state, &id)?;
    let e = entry.lock().expect("entry lock");
    let s = &e.session;
    let view = StateView {
        id: &s.id,
        state: s.state,
        config: &s.config,
        n_e: s.resolved_n_e,
        pending_query: s.pending_query.as_ref(),
        options: &s.options,
        history: &s.data,
        iterations: &s.history,
        fits: s.fits,
        pareto_available: s.pareto.is_some(),
        last_error: e.last_error.as_deref(),
        created_at: &s.created_at,
        updated_at: &s.updated_at,
    };
    Ok(Json(serde_json::to_value(view)?))
}

async fn get_pareto(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ParetoEstimate>> {
    let entry = entry(&state, &id)?;
    let e = entry.lock().expect("entry lock");
    e.session
        .pareto
        .clone()
        .map(Json)
        .ok_or_else(|| ServiceError::Conflict("no fit has completed yet".into()))
}

fn state_name(s: SessionState) -> String {
    serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}
