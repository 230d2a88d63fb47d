use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::{get, post};
use axum::{Json, Router};
use edgequery::graph::fixtures;
use edgequery::ExchangeGraph;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};

use crate::error::{ApiError, ApiResult};
use crate::session::{
    now_ms, CreateSession, Event, FinalResult, GraphRef, RecommendationView, Response, Session, SessionSpec,
    SessionView, Status,
};
use crate::store::Store;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Where session logs and uploaded graphs live; in memory when absent.
    pub data_dir: Option<PathBuf>,
    /// Upper bound on tree-search iterations per recommendation, so a
    /// request stays interactive.
    pub mcts_iteration_cap: u64,
    /// When set, every request must carry `Authorization: Bearer <token>`.
    pub token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { data_dir: None, mcts_iteration_cap: 500, token: None }
    }
}

type SharedSession = Arc<Mutex<Session>>;

struct Inner {
    config: ServiceConfig,
    store: Store,
    sessions: RwLock<HashMap<String, SharedSession>>,
    uploads: RwLock<BTreeMap<String, ExchangeGraph>>,
}

/// Shared service state. Sessions are independent; each one has its own
/// lock, so mutations of a session are serialized while different
/// sessions proceed in parallel.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Opens the data directory and replays every stored session.
    pub fn new(config: ServiceConfig) -> ApiResult<Self> {
        let store = match &config.data_dir {
            Some(dir) => Store::open(dir)?,
            None => Store::memory(),
        };
        let sessions = store
            .load_sessions()?
            .into_iter()
            .map(|s| (s.id().to_string(), Arc::new(Mutex::new(s))))
            .collect();
        let uploads = store.load_graphs()?;
        Ok(AppState(Arc::new(Inner { config, store, sessions: RwLock::new(sessions), uploads: RwLock::new(uploads) })))
    }

    async fn session(&self, id: &str) -> ApiResult<SharedSession> {
        self.0
            .sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id:?}")).with_detail(serde_json::json!({ "session_id": id })))
    }

    async fn graph(&self, reference: &GraphRef) -> ApiResult<(ExchangeGraph, String)> {
        match reference {
            GraphRef::Fixture(name) => fixtures::by_name(name).map(|g| (g, name.clone())).ok_or_else(|| {
                ApiError::bad_request("unknown_graph", format!("no fixture named {name:?}"))
                    .with_detail(serde_json::json!({ "fixtures": fixtures::NAMES }))
            }),
            GraphRef::Uploaded(id) => self.0.uploads.read().await.get(id).map(|g| (g.clone(), format!("upload:{id}"))).ok_or_else(
                || ApiError::bad_request("unknown_graph", format!("no uploaded graph {id:?}")),
            ),
            GraphRef::Inline(graph) => Ok((graph.clone(), "inline".into())),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/recommendation", get(recommendation))
        .route("/sessions/{id}/responses", post(record_response))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/events", get(events))
        .route("/graphs", get(list_graphs).post(upload_graph))
        .route("/graphs/{id}", get(get_graph))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(middleware::from_fn_with_state(state.clone(), authorize))
        .with_state(state)
}

async fn authorize(State(state): State<AppState>, request: Request, next: Next) -> HttpResponse {
    if let Some(token) = &state.0.config.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(request).await
}

/// Maps body parsing failures onto the common error shape.
fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|rejection| ApiError::bad_request("invalid_body", "request body is not valid").with_detail(rejection.body_text()))
}

/// Runs solver work off the async threads.
async fn blocking<T: Send + 'static>(work: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(work).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn create_session(
    State(state): State<AppState>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let req = body(payload)?;
    let (graph, label) = state.graph(&req.graph).await?;
    let spec = SessionSpec::resolve(req, graph, label, state.0.config.mcts_iteration_cap)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let store = state.0.store.clone();
    let session = blocking(move || {
        let session = Session::create(id, spec, now_ms())?;
        store.append(session.id(), &session.created_event())?;
        Ok(session)
    })
    .await?;
    let view = session.view();
    state.0.sessions.write().await.insert(view.id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(view)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionListEntry {
    pub id: String,
    pub status: Status,
    pub graph: String,
    pub created_at_ms: u64,
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionListEntry>> {
    let sessions: Vec<SharedSession> = state.0.sessions.read().await.values().cloned().collect();
    let mut entries = Vec::with_capacity(sessions.len());
    for s in sessions {
        let view = s.lock().await.view();
        entries.push(SessionListEntry { id: view.id, status: view.status, graph: view.graph.label, created_at_ms: view.created_at_ms });
    }
    entries.sort_by(|a, b| (a.created_at_ms, &a.id).cmp(&(b.created_at_ms, &b.id)));
    Json(entries)
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let session = state.session(&id).await?.lock_owned().await;
    Ok(Json(blocking(move || Ok(session.view())).await?))
}

async fn recommendation(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<RecommendationView>> {
    let mut session = state.session(&id).await?.lock_owned().await;
    Ok(Json(blocking(move || session.recommend()).await?))
}

/// Body of `POST /sessions/{id}/responses`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseBody {
    pub edge_id: usize,
    pub response: Response,
}

/// Validates, persists, then applies: the log never holds an event the
/// session refused, and memory never runs ahead of the log.
async fn commit(state: &AppState, id: &str, event: Event) -> ApiResult<SessionView> {
    let mut session = state.session(id).await?.lock_owned().await;
    let store = state.0.store.clone();
    blocking(move || {
        session.validate(&event)?;
        store.append(session.id(), &event)?;
        session.apply(event)?;
        Ok(session.view())
    })
    .await
}

async fn record_response(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<ResponseBody>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let ResponseBody { edge_id, response } = body(payload)?;
    let view = commit(&state, &id, Event::Response { at_ms: now_ms(), edge_id, response }).await?;
    Ok(Json(view))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Finalized {
    pub session_id: String,
    #[serde(flatten)]
    pub result: FinalResult,
}

async fn finalize(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Finalized>> {
    let view = commit(&state, &id, Event::Finalized { at_ms: now_ms() }).await?;
    let result = view.result.ok_or_else(|| ApiError::internal("finalized session has no result"))?;
    Ok(Json(Finalized { session_id: view.id, result }))
}

async fn events(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<Event>>> {
    let session = state.session(&id).await?;
    let events = session.lock().await.events().to_vec();
    Ok(Json(events))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GraphEntry {
    pub id: String,
    /// `fixture` or `upload`.
    pub source: String,
    pub vertices: usize,
    pub edges: usize,
    pub ndds: usize,
}

fn entry(id: &str, source: &str, g: &ExchangeGraph) -> GraphEntry {
    GraphEntry { id: id.into(), source: source.into(), vertices: g.vertex_count(), edges: g.edge_count(), ndds: g.ndd_count() }
}

async fn list_graphs(State(state): State<AppState>) -> Json<Vec<GraphEntry>> {
    let mut out: Vec<GraphEntry> = fixtures::NAMES
        .iter()
        .filter_map(|name| fixtures::by_name(name).map(|g| entry(name, "fixture", &g)))
        .collect();
    out.extend(state.0.uploads.read().await.iter().map(|(id, g)| entry(id, "upload", g)));
    Json(out)
}

async fn get_graph(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ExchangeGraph>> {
    if let Some(g) = fixtures::by_name(&id) {
        return Ok(Json(g));
    }
    state.0.uploads.read().await.get(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found(format!("no graph {id:?}")))
}

/// Body of `POST /graphs`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UploadGraph {
    pub graph: ExchangeGraph,
}

async fn upload_graph(
    State(state): State<AppState>,
    payload: Result<Json<UploadGraph>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<GraphEntry>)> {
    let UploadGraph { graph } = body(payload)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    state.0.store.save_graph(&id, &graph)?;
    let e = entry(&id, "upload", &graph);
    state.0.uploads.write().await.insert(id, graph);
    Ok((StatusCode::CREATED, Json(e)))
}
