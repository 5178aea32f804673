//! JSON API for teaching sessions, mounted under `/api/v1`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

use super::core::{CandidateArrow, MetricPoint, SessionConfig, SessionLearner, SessionView, TeachingSession};
use super::log::{now, EventSink, SessionEvent};
use crate::error::Error;
use crate::gridworld::{maps, HumanMap};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Conflict(_) => StatusCode::CONFLICT,
            Error::NonFinite(_) | Error::Convergence { .. } | Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Slot {
    session: TeachingSession,
    events: Vec<SessionEvent>,
    sink: Option<EventSink>,
}

impl Slot {
    fn record(&mut self, event: SessionEvent) -> Result<(), Error> {
        if let Some(sink) = &mut self.sink {
            sink.append(&event)?;
        }
        self.events.push(event);
        Ok(())
    }
}

/// Shared service state: one lock per session, a map lock only for lookup.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Mutex<Slot>>>>>,
    next_id: Arc<AtomicU64>,
    log_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(log_dir: Option<PathBuf>) -> Self {
        Self {
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
            log_dir,
        }
    }

    fn slot(&self, id: &str) -> ApiResult<Arc<Mutex<Slot>>> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::from(Error::NotFound(format!("session `{id}`"))))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub map_id: String,
    pub learner_kind: SessionLearner,
    pub beta: Option<f64>,
    pub seed: Option<u64>,
    pub pair_with: Option<String>,
    pub step_cap: Option<usize>,
    pub eta: Option<f64>,
    /// Map text, used when `map_id` is `custom`.
    pub map: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub view: SessionView,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectRequest {
    pub candidate_index: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CandidatesResponse {
    pub step: usize,
    pub candidates: Vec<CandidateArrow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsResponse {
    pub session_id: String,
    pub metrics: Vec<MetricPoint>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MapInfo {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub rewards: Vec<f64>,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("bad request body: {e}")))
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/maps", get(list_maps))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/candidates", get(get_candidates))
        .route("/sessions/{id}/select", post(select))
        .route("/sessions/{id}/metrics", get(get_metrics))
        .route("/sessions/{id}/finish", post(finish))
        .with_state(state);
    let cors = CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any);
    Router::new().nest("/api/v1", api).layer(cors)
}

async fn list_maps() -> Json<Vec<MapInfo>> {
    Json(
        HumanMap::ALL
            .iter()
            .map(|m| {
                let g = m.map();
                MapInfo {
                    id: m.id().to_string(),
                    width: g.width,
                    height: g.height,
                    rewards: g.rewards,
                }
            })
            .collect(),
    )
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<String>> {
    let mut ids: Vec<String> = state.sessions.read().keys().cloned().collect();
    ids.sort();
    Json(ids)
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<CreateResponse>)> {
    let req: CreateRequest = parse_body(&body)?;
    let pair = match &req.pair_with {
        Some(other) => {
            let slot = state.slot(other)?;
            let guard = slot.lock();
            Some(guard.session.config().clone())
        }
        None => None,
    };
    let seed = req.seed.or(pair.as_ref().map(|p| p.seed)).unwrap_or(0);
    let mut config = if req.map_id.eq_ignore_ascii_case("custom") {
        let text = req
            .map
            .as_deref()
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "custom sessions need a `map`"))?;
        SessionConfig::custom("custom".into(), maps::parse_map(text)?, req.learner_kind, seed)
    } else {
        SessionConfig::for_map(&req.map_id, req.learner_kind, seed)?
    };
    if let Some(p) = &pair {
        if p.init.len() != config.init.len() {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "paired sessions need maps of the same size",
            ));
        }
        config.init = p.init.clone();
    }
    if let Some(b) = req.beta {
        config.beta = b;
    }
    if let Some(c) = req.step_cap {
        config.step_cap = c;
    }
    if let Some(e) = req.eta {
        config.eta = e;
    }
    let id = format!("s{:06}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let session = TeachingSession::new(id.clone(), config)?;
    let view = session.view()?;
    let sink = match &state.log_dir {
        Some(dir) => Some(EventSink::create(dir, &id)?),
        None => None,
    };
    let mut slot = Slot {
        events: Vec::new(),
        sink,
        session,
    };
    let created = SessionEvent::created(&slot.session);
    slot.record(created)?;
    state.sessions.write().insert(id.clone(), Arc::new(Mutex::new(slot)));
    tracing::info!(session = %id, map = %view.map_id, "session created");
    Ok((StatusCode::CREATED, Json(CreateResponse { session_id: id, view })))
}

async fn get_state(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let slot = state.slot(&id)?;
    let guard = slot.lock();
    Ok(Json(guard.session.view()?))
}

async fn get_candidates(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<CandidatesResponse>> {
    let slot = state.slot(&id)?;
    let guard = slot.lock();
    if guard.session.is_finished() {
        return Err(Error::Conflict("session already finished").into());
    }
    Ok(Json(CandidatesResponse {
        step: guard.session.step(),
        candidates: guard.session.candidate_arrows(),
    }))
}

async fn select(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SessionView>> {
    let slot = state.slot(&id)?;
    let req: SelectRequest = parse_body(&body)?;
    let mut guard = slot.lock();
    let shown = guard.session.candidate_arrows();
    let metrics = guard.session.select(req.candidate_index)?;
    let step = guard.session.step();
    guard.record(SessionEvent::Selected {
        timestamp: now(),
        step,
        candidates: shown,
        selection: req.candidate_index,
        metrics,
    })?;
    if guard.session.is_finished() {
        guard.record(SessionEvent::Finished { timestamp: now(), step })?;
    }
    Ok(Json(guard.session.view()?))
}

async fn get_metrics(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<MetricsResponse>> {
    let slot = state.slot(&id)?;
    let guard = slot.lock();
    Ok(Json(MetricsResponse {
        session_id: id,
        metrics: guard.session.metrics().to_vec(),
    }))
}

async fn finish(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let slot = state.slot(&id)?;
    let mut guard = slot.lock();
    if !guard.session.is_finished() {
        guard.session.finish();
        let step = guard.session.step();
        guard.record(SessionEvent::Finished { timestamp: now(), step })?;
    }
    Ok(Json(guard.session.view()?))
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub host: String,
    pub port: u16,
    pub log_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

pub fn app(options: &ServeOptions) -> Router {
    let mut app = router(AppState::new(options.log_dir.clone()));
    if let Some(dir) = &options.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app
}

pub async fn serve(options: ServeOptions) -> Result<(), Error> {
    let addr: SocketAddr = format!("{}:{}", options.host, options.port)
        .parse()
        .map_err(|e| Error::Config(format!("bad listen address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "serving teaching sessions");
    axum::serve(listener, app(&options))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
