//! Labeling-session service: the human-oracle side of the active-learning
//! loop over HTTP. A session wraps one [`ActiveLearner`]; labels arrive per
//! item, a completed batch trains in the background and clients poll
//! `status` until the next batch is ready.
//!
//! Routes (all JSON, under `/v1`):
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | body: run config; creates a session and returns round-0 queries |
//! | GET | `/sessions/{id}/queries` | current batch |
//! | POST | `/sessions/{id}/labels` | `{"labels": [{"pool_index", "class"}]}` |
//! | GET | `/sessions/{id}/status` | phase, round, pool sizes, curve, epoch progress |
//! | GET | `/sessions/{id}/record` | the run record so far |
//! | GET | `/sessions/{id}/audit` | every label submission, accepted or not |

pub mod api;
mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex as StdMutex};

use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::RwLock;
use tower_http::cors::{AllowOrigin, CorsLayer};
use uuid::Uuid;

use deal_core::engine::{ActiveLearner, OracleKind, RunConfig};
use deal_core::{Error as CoreError, FieldError};

use api::{CreatedResponse, ErrorBody, LabelsRequest, SessionPhase};
use session::{Session, SessionHandle};

/// Seconds a client should wait before polling a training session again.
pub const RETRY_AFTER_SECONDS: u64 = 1;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Relative dataset paths in session configs resolve against this.
    pub base_dir: PathBuf,
    /// Sessions are saved here after every change and reloaded on start.
    pub state_dir: Option<PathBuf>,
    /// Allowed browser origin; `None` allows any.
    pub allowed_origin: Option<String>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    sessions: RwLock<HashMap<Uuid, Arc<SessionHandle>>>,
}

impl AppState {
    /// Builds the state, reloading any sessions found in the state directory.
    /// Sessions that were mid-training resume training once a runtime is available.
    pub fn new(config: ServiceConfig) -> std::io::Result<Self> {
        let mut sessions = HashMap::new();
        if let Some(dir) = &config.state_dir {
            std::fs::create_dir_all(dir)?;
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if !path.is_dir() {
                    continue;
                }
                let base = config.base_dir.clone();
                match session::restore(&path, |state| state.config.dataset.load(&base)) {
                    Ok((id, s)) => {
                        log::info!("restored session {id} at round {}", s.learner.round());
                        sessions.insert(id, Arc::new(handle(id, s)));
                    }
                    Err(e) => log::warn!("skipping {}: {e}", path.display()),
                }
            }
        }
        Ok(Self { inner: Arc::new(Inner { config, sessions: RwLock::new(sessions) }) })
    }

    async fn get(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        let id: Uuid = id.parse().map_err(|_| ApiError::NotFound)?;
        self.inner.sessions.read().await.get(&id).cloned().ok_or(ApiError::NotFound)
    }

    /// Restart training for restored sessions whose batch was committed.
    async fn resume_pending_training(&self) {
        let handles: Vec<_> = self.inner.sessions.read().await.values().cloned().collect();
        for h in handles {
            let mut s = h.session.lock().await;
            maybe_train(&h, &mut s);
        }
    }
}

fn handle(id: Uuid, s: Session) -> SessionHandle {
    SessionHandle { id, session: tokio::sync::Mutex::new(s), progress: Arc::new(StdMutex::new(None)) }
}

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new()
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([header::CONTENT_TYPE])
        .expose_headers([header::RETRY_AFTER]);
    let cors = match state.inner.config.allowed_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(origin)) => cors.allow_origin(origin),
        _ => cors.allow_origin(AllowOrigin::any()),
    };
    let v1 = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/queries", get(get_queries))
        .route("/sessions/{id}/labels", post(submit_labels))
        .route("/sessions/{id}/status", get(get_status))
        .route("/sessions/{id}/record", get(get_record))
        .route("/sessions/{id}/audit", get(get_audit));
    Router::new().nest("/v1", v1).layer(cors).with_state(state)
}

/// Bind and serve until the process is stopped.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(config)?;
    state.resume_pending_training().await;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

#[derive(Debug)]
enum ApiError {
    NotFound,
    Invalid(Vec<FieldError>),
    Conflict { phase: SessionPhase },
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::NotFound => (
                StatusCode::NOT_FOUND,
                ErrorBody { error: "not_found".into(), message: "no such session".into(), fields: vec![], phase: None },
            ),
            ApiError::Invalid(fields) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                ErrorBody {
                    error: "invalid_config".into(),
                    message: fields.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
                    fields,
                    phase: None,
                },
            ),
            ApiError::Conflict { phase } => {
                let body = ErrorBody {
                    error: "wrong_phase".into(),
                    message: format!("session is {}", serde_json::to_value(phase).unwrap_or_default()),
                    fields: vec![],
                    phase: Some(phase),
                };
                let mut resp = (StatusCode::CONFLICT, Json(body)).into_response();
                if phase == SessionPhase::Training {
                    resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from(RETRY_AFTER_SECONDS));
                }
                return resp;
            }
            ApiError::Internal(message) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                ErrorBody { error: "internal".into(), message, fields: vec![], phase: None },
            ),
        };
        (status, Json(body)).into_response()
    }
}

fn invalid(e: CoreError, fallback_field: &str) -> ApiError {
    match e {
        CoreError::Config(fields) => ApiError::Invalid(fields),
        other => ApiError::Invalid(vec![FieldError::new(fallback_field, other.to_string())]),
    }
}

async fn create_session(
    State(app): State<AppState>,
    Json(body): Json<serde_json::Value>,
) -> Result<(StatusCode, Json<CreatedResponse>), ApiError> {
    let config: RunConfig =
        serde_json::from_value(body).map_err(|e| ApiError::Invalid(vec![FieldError::new("body", e.to_string())]))?;
    config.validate().map_err(|e| invalid(e, "config"))?;
    if config.oracle != OracleKind::HumanSession {
        return Err(ApiError::Invalid(vec![FieldError::new("oracle", "a labeling session needs oracle = \"human_session\"")]));
    }
    let id = Uuid::new_v4();
    let dir = app.inner.config.state_dir.as_ref().map(|d| d.join(id.to_string()));
    let base = app.inner.config.base_dir.clone();
    let session = tokio::task::spawn_blocking(move || -> Result<Session, ApiError> {
        let dataset = config.dataset.load(&base).map_err(|e| invalid(e, "dataset"))?;
        let learner = ActiveLearner::new(config, Arc::new(dataset), 0).map_err(|e| invalid(e, "config"))?;
        Ok(Session::new(learner, dir))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    session.persist().map_err(|e| ApiError::Internal(format!("cannot save session: {e}")))?;
    let created = CreatedResponse { session_id: id.to_string(), status: session.status(id, None), queries: session.queries(id) };
    app.inner.sessions.write().await.insert(id, Arc::new(handle(id, session)));
    log::info!("created session {id}");
    Ok((StatusCode::CREATED, Json(created)))
}

async fn get_queries(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let h = app.get(&id).await?;
    let s = h.session.lock().await;
    match s.phase() {
        SessionPhase::AwaitingLabels => Ok(Json(s.queries(h.id)).into_response()),
        phase => Err(ApiError::Conflict { phase }),
    }
}

async fn submit_labels(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<LabelsRequest>,
) -> Result<Response, ApiError> {
    let h = app.get(&id).await?;
    let mut s = h.session.lock().await;
    let phase = s.phase();
    if phase != SessionPhase::AwaitingLabels && !req.labels.is_empty() {
        return Err(ApiError::Conflict { phase });
    }
    let resp = s.submit(&req.labels);
    if !resp.accepted.is_empty() {
        s.persist().map_err(|e| ApiError::Internal(format!("cannot save session: {e}")))?;
    }
    maybe_train(&h, &mut s);
    let status = if resp.rejected.iter().any(|r| r.status == 422) {
        StatusCode::UNPROCESSABLE_ENTITY
    } else if !resp.rejected.is_empty() {
        StatusCode::CONFLICT
    } else {
        StatusCode::OK
    };
    Ok((status, Json(resp)).into_response())
}

async fn get_status(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let h = app.get(&id).await?;
    let s = h.session.lock().await;
    let progress = *h.progress.lock().expect("progress lock");
    Ok(Json(s.status(h.id, progress)).into_response())
}

async fn get_record(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let h = app.get(&id).await?;
    let s = h.session.lock().await;
    Ok(Json(s.record()).into_response())
}

async fn get_audit(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let h = app.get(&id).await?;
    let s = h.session.lock().await;
    Ok(Json(&s.audit).into_response())
}

/// Start the background training job if the batch was just committed.
/// Training runs on a blocking thread with a copy of the learner; the result
/// replaces the session's learner under the session lock.
fn maybe_train(h: &Arc<SessionHandle>, s: &mut Session) {
    if !s.needs_training() {
        return;
    }
    s.training = true;
    let mut learner = s.learner.clone();
    let progress = Arc::clone(&h.progress);
    let h = Arc::clone(h);
    tokio::spawn(async move {
        let sink = Arc::clone(&progress);
        let outcome = tokio::task::spawn_blocking(move || {
            let r = learner.advance(|p| *sink.lock().expect("progress lock") = Some(p));
            (learner, r)
        })
        .await;
        let mut s = h.session.lock().await;
        s.training = false;
        *progress.lock().expect("progress lock") = None;
        match outcome {
            Ok((learner, Ok(()))) => s.learner = learner,
            Ok((_, Err(e))) => s.failure = Some(e.to_string()),
            Err(e) => s.failure = Some(format!("training thread failed: {e}")),
        }
        if let Some(f) = &s.failure {
            log::error!("session {}: {f}", h.id);
        }
        if let Err(e) = s.persist() {
            log::error!("session {}: cannot save: {e}", h.id);
        }
    });
}
