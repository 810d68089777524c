//! JSON-over-HTTP API for driving sessions from a browser front end.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | create a session |
//! | GET | `/sessions` | list session ids |
//! | GET | `/sessions/{id}` | summary: ontology stats, task states |
//! | GET | `/sessions/{id}/ontology?format=dot\|doc\|triples` | export |
//! | GET | `/sessions/{id}/validate?policy=strict\|permissive` | validation report |
//! | GET | `/sessions/{id}/tasks/{kind}/log` | the task's iterations |
//! | POST | `/sessions/{id}/tasks/{kind}/step` | run one step |
//! | POST | `/sessions/{id}/control` | `{"task": .., "command": ..}` |
//! | GET, PUT | `/sessions/{id}/prompt-template/{kind}` | view / replace a template |
//! | GET | `/sessions/{id}/iterations/{n}` | one iteration in full |
//!
//! Errors are `{"error": code, "message": text}` with 404 for unknown
//! resources, 409 for illegal state transitions and 422 for invalid input.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::dot::{hierarchy_from_dot, parse_dot};
use crate::gateway::{Gateway, GatewayConfig, GatewayError, Transcript};
use crate::ontology::{validate, Ontology, ValidationPolicy};
use crate::orchestrator::{ControlCommand, OrchestratorError, Session, SessionConfig, StepOutcome, StopReason, TaskStatus};
use crate::prompt::{PromptTemplate, TaskKind};
use crate::store::{export, ExportFormat, SessionStore};

/// Builds the gateway for a new session from its config and an optional
/// transcript to replay.
pub type GatewayFactory = Arc<dyn Fn(&GatewayConfig, Transcript) -> Result<Gateway, GatewayError> + Send + Sync>;

struct Entry {
    session: Session,
    gateway: Gateway,
    store: Option<SessionStore>,
}

impl Entry {
    fn persist(&self) -> Result<(), ApiError> {
        match &self.store {
            Some(store) => store
                .save(&self.session, self.gateway.transcript())
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store", e.to_string())),
            None => Ok(()),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<BTreeMap<Uuid, Arc<Mutex<Entry>>>>>,
    gateways: GatewayFactory,
    data_dir: Option<PathBuf>,
}

impl AppState {
    /// In-memory sessions; gateways come from their config.
    pub fn new() -> Self {
        AppState {
            sessions: Default::default(),
            gateways: Arc::new(|config, transcript| Gateway::from_config(config.clone(), transcript)),
            data_dir: None,
        }
    }

    pub fn with_gateways(mut self, factory: GatewayFactory) -> Self {
        self.gateways = factory;
        self
    }

    /// Persist every session under `dir/<id>/` after each change, and load
    /// the sessions already there.
    pub fn with_data_dir(mut self, dir: PathBuf) -> Result<Self, crate::store::StoreError> {
        if let Ok(read) = std::fs::read_dir(&dir) {
            for entry in read.flatten() {
                let store = SessionStore::new(entry.path());
                if !store.exists() {
                    continue;
                }
                let (session, transcript) = store.load()?;
                let mut config = session.config.gateway.clone();
                // Reopened sessions continue from their transcript.
                if config.mode == crate::gateway::GatewayMode::Replay || config.endpoint_url.is_none() {
                    config.mode = crate::gateway::GatewayMode::Replay;
                }
                let gateway = (self.gateways)(&config, transcript).unwrap_or_else(|_| Gateway::replay(Transcript::new()));
                self.sessions.lock().expect("session map").insert(
                    session.id,
                    Arc::new(Mutex::new(Entry {
                        session,
                        gateway,
                        store: Some(store),
                    })),
                );
            }
        }
        self.data_dir = Some(dir);
        Ok(self)
    }

    fn entry(&self, id: Uuid) -> Result<Arc<Mutex<Entry>>, ApiError> {
        self.sessions
            .lock()
            .expect("session map")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }
}

impl Default for AppState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<serde_json::Value>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    /// Structured payload, e.g. the report behind a rejected edit.
    detail: Option<serde_json::Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            detail: None,
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", message)
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        let (status, code) = match &e {
            OrchestratorError::InvalidTransition { .. } => (StatusCode::CONFLICT, "invalid_transition"),
            OrchestratorError::UnknownIteration { .. } => (StatusCode::NOT_FOUND, "unknown_iteration"),
            OrchestratorError::Prompt(_) => (StatusCode::UNPROCESSABLE_ENTITY, "prompt"),
            OrchestratorError::Ontology(_) => (StatusCode::UNPROCESSABLE_ENTITY, "ontology"),
            OrchestratorError::Config(_) => (StatusCode::UNPROCESSABLE_ENTITY, "config"),
            OrchestratorError::RepeatedFailure { .. } | OrchestratorError::StepLimit { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "run_failed")
            }
        };
        let mut err = ApiError::new(status, code, e.to_string());
        if let OrchestratorError::Ontology(crate::ontology::OntologyError::Rejected(report)) = &e {
            err.code = "edit_rejected";
            err.detail = serde_json::to_value(report).ok();
        }
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code,
            message: self.message,
            detail: self.detail,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_id(raw: &str) -> ApiResult<Uuid> {
    raw.parse().map_err(|_| ApiError::not_found(format!("no session {raw}")))
}

fn parse_kind(raw: &str) -> ApiResult<TaskKind> {
    raw.parse().map_err(|_| ApiError::not_found(format!("no task kind `{raw}`")))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub domain: String,
    /// Seed hierarchy as DOT; empty ontology when absent.
    #[serde(default)]
    pub seed_dot: Option<String>,
    #[serde(default)]
    pub config: Option<SessionConfig>,
    /// Transcript to replay, as JSONL.
    #[serde(default)]
    pub transcript_jsonl: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TaskSummary {
    pub status: TaskStatus,
    pub stop_reason: Option<StopReason>,
    pub iterations: usize,
    pub accepted: usize,
    pub gateway_calls: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: Uuid,
    pub domain: String,
    pub version: u64,
    pub checksum: String,
    pub concepts: usize,
    pub edges: usize,
    pub triples: usize,
    pub tasks: BTreeMap<TaskKind, TaskSummary>,
}

fn summary(s: &Session) -> SessionSummary {
    SessionSummary {
        id: s.id,
        domain: s.domain_label.clone(),
        version: s.ontology.version(),
        checksum: s.ontology.checksum(),
        concepts: s.ontology.len(),
        edges: s.ontology.edge_count(),
        triples: s.ontology.triples().len(),
        tasks: s
            .tasks
            .iter()
            .map(|(k, t)| {
                (
                    *k,
                    TaskSummary {
                        status: t.status,
                        stop_reason: t.stop_reason,
                        iterations: t.iterations.len(),
                        accepted: t.accepted().count(),
                        gateway_calls: t.gateway_calls(),
                    },
                )
            })
            .collect(),
    }
}

/// Seed ontology from DOT text, using the configured edge direction.
pub fn seed_from_dot(text: &str, config: &SessionConfig) -> Result<Ontology, String> {
    let (graph, _) = parse_dot(text).map_err(|e| e.to_string())?;
    Ok(hierarchy_from_dot(&graph, config.prompt.edge_direction).into_ontology())
}

async fn create_session(State(state): State<AppState>, Json(req): Json<CreateSession>) -> ApiResult<Response> {
    let config = req.config.unwrap_or_default();
    let seed = match &req.seed_dot {
        Some(text) => seed_from_dot(text, &config).map_err(ApiError::invalid)?,
        None => Ontology::new(),
    };
    let transcript = match &req.transcript_jsonl {
        Some(text) => Transcript::from_jsonl(text).map_err(|e| ApiError::invalid(e.to_string()))?,
        None => Transcript::new(),
    };
    let gateway = (state.gateways)(&config.gateway, transcript).map_err(|e| ApiError::invalid(e.to_string()))?;
    let session = Session::new(&req.domain, seed, config)?;
    let id = session.id;
    let store = state.data_dir.as_ref().map(|d| SessionStore::new(d.join(id.to_string())));
    let entry = Entry { session, gateway, store };
    entry.persist()?;
    let body = summary(&entry.session);
    state
        .sessions
        .lock()
        .expect("session map")
        .insert(id, Arc::new(Mutex::new(entry)));
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<Uuid>> {
    Json(state.sessions.lock().expect("session map").keys().copied().collect())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    let entry = state.entry(parse_id(&id)?)?;
    let entry = entry.lock().expect("session lock");
    Ok(Json(summary(&entry.session)))
}

#[derive(Debug, Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

async fn get_ontology(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FormatQuery>,
) -> ApiResult<Response> {
    let format: ExportFormat = q.format.as_deref().unwrap_or("doc").parse().map_err(ApiError::invalid)?;
    let entry = state.entry(parse_id(&id)?)?;
    let entry = entry.lock().expect("session lock");
    let s = &entry.session;
    let body = export(&s.ontology, format, s.config.prompt.edge_direction);
    let content_type = match format {
        ExportFormat::Doc => "application/json",
        ExportFormat::Dot => "text/vnd.graphviz",
        ExportFormat::Triples => "text/plain; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], body).into_response())
}

#[derive(Debug, Deserialize)]
struct PolicyQuery {
    policy: Option<String>,
}

async fn get_validation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<PolicyQuery>,
) -> ApiResult<Response> {
    let policy = match q.policy.as_deref().unwrap_or("strict") {
        "strict" => ValidationPolicy::Strict,
        "permissive" => ValidationPolicy::Permissive,
        other => return Err(ApiError::invalid(format!("unknown policy `{other}`"))),
    };
    let entry = state.entry(parse_id(&id)?)?;
    let entry = entry.lock().expect("session lock");
    Ok(Json(validate(&entry.session.ontology, policy)).into_response())
}

async fn task_log(State(state): State<AppState>, Path((id, kind)): Path<(String, String)>) -> ApiResult<Response> {
    let kind = parse_kind(&kind)?;
    let entry = state.entry(parse_id(&id)?)?;
    let entry = entry.lock().expect("session lock");
    Ok(Json(entry.session.task(kind)).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StepReply {
    #[serde(flatten)]
    pub outcome: StepOutcome,
    pub status: TaskStatus,
}

async fn step(State(state): State<AppState>, Path((id, kind)): Path<(String, String)>) -> ApiResult<Json<StepReply>> {
    let kind = parse_kind(&kind)?;
    let entry = state.entry(parse_id(&id)?)?;
    // Gateway calls block; keep them off the async workers.
    tokio::task::spawn_blocking(move || {
        let mut guard = entry.lock().expect("session lock");
        let Entry { session, gateway, .. } = &mut *guard;
        let outcome = session.step(kind, gateway)?;
        let status = session.task(kind).status;
        guard.persist()?;
        Ok(Json(StepReply { outcome, status }))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ControlRequest {
    pub task: TaskKind,
    #[serde(flatten)]
    pub command: ControlCommand,
}

async fn control(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ControlRequest>,
) -> ApiResult<Json<TaskSummary>> {
    let entry = state.entry(parse_id(&id)?)?;
    tokio::task::spawn_blocking(move || {
        let mut guard = entry.lock().expect("session lock");
        let Entry { session, gateway, .. } = &mut *guard;
        session.control(req.task, req.command, gateway)?;
        let body = summary(session).tasks.remove(&req.task).expect("every task is summarized");
        guard.persist()?;
        Ok(Json(body))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

/// Template as the editor sees it: three text areas. `task` is implied by
/// the path and optional on PUT.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateDoc {
    #[serde(default)]
    pub task: Option<TaskKind>,
    pub context: String,
    pub instruction: String,
    #[serde(alias = "format")]
    pub format_spec: String,
}

impl From<&PromptTemplate> for TemplateDoc {
    fn from(t: &PromptTemplate) -> Self {
        TemplateDoc {
            task: Some(t.task),
            context: t.context.clone(),
            instruction: t.instruction.clone(),
            format_spec: t.format.clone(),
        }
    }
}

async fn get_template(
    State(state): State<AppState>,
    Path((id, kind)): Path<(String, String)>,
) -> ApiResult<Json<TemplateDoc>> {
    let kind = parse_kind(&kind)?;
    let entry = state.entry(parse_id(&id)?)?;
    let entry = entry.lock().expect("session lock");
    Ok(Json(entry.session.templates.get(kind).into()))
}

async fn put_template(
    State(state): State<AppState>,
    Path((id, kind)): Path<(String, String)>,
    Json(doc): Json<TemplateDoc>,
) -> ApiResult<Json<TemplateDoc>> {
    let kind = parse_kind(&kind)?;
    if doc.task.is_some_and(|t| t != kind) {
        return Err(ApiError::invalid(format!("template body names another task than {kind}")));
    }
    let template = PromptTemplate {
        task: kind,
        context: doc.context,
        instruction: doc.instruction,
        format: doc.format_spec,
    };
    let entry = state.entry(parse_id(&id)?)?;
    let mut entry = entry.lock().expect("session lock");
    entry.session.set_template(template.clone())?;
    entry.persist()?;
    Ok(Json((&template).into()))
}

async fn get_iteration(
    State(state): State<AppState>,
    Path((id, n)): Path<(String, String)>,
) -> ApiResult<Response> {
    let entry = state.entry(parse_id(&id)?)?;
    let entry = entry.lock().expect("session lock");
    let it = n
        .parse::<usize>()
        .ok()
        .and_then(|n| entry.session.iteration(n))
        .ok_or_else(|| ApiError::not_found(format!("no iteration {n}")))?;
    Ok(Json(it).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/ontology", get(get_ontology))
        .route("/sessions/{id}/validate", get(get_validation))
        .route("/sessions/{id}/tasks/{kind}/log", get(task_log))
        .route("/sessions/{id}/tasks/{kind}/step", post(step))
        .route("/sessions/{id}/control", post(control))
        .route("/sessions/{id}/prompt-template/{kind}", get(get_template).put(put_template))
        .route("/sessions/{id}/iterations/{n}", get(get_iteration))
        .with_state(state)
}

pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
