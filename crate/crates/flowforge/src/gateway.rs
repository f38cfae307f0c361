//! HTTP API over a [`Platform`], plus static `/ui` assets.
//!
//! Every non-2xx response carries an [`ApiError`] body. JSON bodies are
//! compact and newline terminated.

use std::collections::HashMap;
use std::convert::Infallible;
use std::future::{Future, IntoFuture};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use flowforge_core::catalogue::{CatalogueError, ServiceDescriptor, ServiceFilter, ServiceKind};
use flowforge_core::dsl::{self, ValidationError, WorkflowDefinition, WorkflowMode};
use flowforge_core::optimizer::ConfigurationPoint;
use flowforge_core::viz::{QueryError, QuerySpec, RecommendError};
use flowforge_core::TableFrame;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::executor::ExecError;
use crate::optimizer_job::{JobError, JobRequest};
use crate::platform::{Platform, PlatformError};
use crate::smartviz::{NewSource, VizError, MIN_REFRESH_MS};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_DATA_DIR: &str = "flowforge-data";

/// Error body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Map<String, serde_json::Value>>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status: status.as_u16(), code: code.into(), message: message.into(), details: None }
    }

    fn with(mut self, details: serde_json::Value) -> Self {
        if let serde_json::Value::Object(map) = details {
            self.details = Some(map);
        }
        self
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let mut resp = json_response(status, &self);
        if status == StatusCode::UNAUTHORIZED {
            resp.headers_mut().insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
        }
        resp
    }
}

impl From<CatalogueError> for ApiError {
    fn from(e: CatalogueError) -> Self {
        let msg = e.to_string();
        match e {
            CatalogueError::DuplicateService(id) => {
                ApiError::new(StatusCode::CONFLICT, "duplicate_service", msg).with(json!({"name": id.name, "version": id.version}))
            }
            CatalogueError::InvalidDescriptor(issues) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_descriptor", msg).with(json!({"issues": issues}))
            }
            CatalogueError::NotFound { .. } => ApiError::not_found(msg),
            CatalogueError::InUse(id) => {
                ApiError::new(StatusCode::CONFLICT, "in_use", msg).with(json!({"name": id.name, "version": id.version}))
            }
        }
    }
}

impl From<ValidationError> for ApiError {
    fn from(e: ValidationError) -> Self {
        let kind = match &e {
            ValidationError::InvalidDefinition(_) => "invalid_definition",
            ValidationError::UnknownService { .. } => "unknown_service",
            ValidationError::KindMismatch { .. } => "kind_mismatch",
            ValidationError::MissingRequiredParam { .. } => "missing_required_param",
            ValidationError::UnknownParam { .. } => "unknown_param",
            ValidationError::BindingTypeError { .. } => "binding_type_error",
        };
        let mut details = json!({"kind": kind});
        if let Some(node) = e.node() {
            details["node"] = json!(node);
        }
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_error", e.to_string()).with(details)
    }
}

impl From<ExecError> for ApiError {
    fn from(e: ExecError) -> Self {
        let msg = e.to_string();
        match e {
            ExecError::NotFound(_) => ApiError::not_found(msg),
            ExecError::NotRunning(_) => ApiError::new(StatusCode::CONFLICT, "not_running", msg),
            ExecError::AlreadyDeployed(_) => ApiError::new(StatusCode::CONFLICT, "already_deployed", msg),
            ExecError::WrongMode { .. } => ApiError::new(StatusCode::CONFLICT, "wrong_mode", msg),
            ExecError::OperatorInit(init) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "operator_init_error", msg).with(json!({"node": init.node}))
            }
            ExecError::Journal { .. } | ExecError::Io(_) => ApiError::internal(msg),
        }
    }
}

impl From<JobError> for ApiError {
    fn from(e: JobError) -> Self {
        let msg = e.to_string();
        match e {
            JobError::NotFound(_) => ApiError::not_found(msg),
            JobError::Invalid(_) | JobError::Rrs(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_job", msg),
            JobError::Io(_) => ApiError::internal(msg),
        }
    }
}

impl From<VizError> for ApiError {
    fn from(e: VizError) -> Self {
        let msg = e.to_string();
        let unprocessable = |code| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, msg.clone());
        match e {
            VizError::UnreachableSource(_) => unprocessable("unreachable_source"),
            VizError::UnsupportedKind(_) => unprocessable("unsupported_kind"),
            VizError::InvalidSource(_) => unprocessable("invalid_source"),
            VizError::UnknownSource(_) | VizError::UnknownTable { .. } => ApiError::not_found(msg),
            VizError::DuplicateSource(_) => ApiError::new(StatusCode::CONFLICT, "duplicate_source", msg),
            VizError::InvalidInterval => ApiError::bad_request(msg),
            VizError::Query(QueryError::UnknownColumn(c)) => unprocessable("unknown_column").with(json!({"column": c})),
            VizError::Query(QueryError::TypeError { column, .. }) => {
                unprocessable("type_error").with(json!({"column": column}))
            }
            VizError::Query(_) => unprocessable("invalid_query"),
            VizError::Recommend(RecommendError::EmptyFrame) => unprocessable("empty_frame"),
            VizError::Csv(_) | VizError::Frame(_) => unprocessable("unreadable_source"),
            VizError::Table(_) => ApiError::internal(msg),
        }
    }
}

impl From<PlatformError> for ApiError {
    fn from(e: PlatformError) -> Self {
        let msg = e.to_string();
        match e {
            PlatformError::Catalogue(c) => c.into(),
            PlatformError::Syntax(s) => ApiError::new(StatusCode::BAD_REQUEST, "syntax_error", msg)
                .with(json!({"line": s.line, "column": s.column})),
            PlatformError::Validation(v) => v.into(),
            PlatformError::InvalidWorkflowName(_) => ApiError::bad_request(msg),
            PlatformError::WorkflowExists(_) => ApiError::new(StatusCode::CONFLICT, "workflow_exists", msg),
            PlatformError::WorkflowNotFound { .. } => ApiError::not_found(msg),
            PlatformError::WorkflowActive(_) => ApiError::new(StatusCode::CONFLICT, "workflow_active", msg),
            PlatformError::Exec(x) => x.into(),
            PlatformError::Job(j) => j.into(),
            PlatformError::Journal { .. } | PlatformError::Table(_) | PlatformError::Io(_) => ApiError::internal(msg),
        }
    }
}

type ApiResult = Result<Response, ApiError>;

fn json_response<T: Serialize + ?Sized>(status: StatusCode, body: &T) -> Response {
    let mut bytes = serde_json::to_vec(body).expect("response bodies serialize");
    bytes.push(b'\n');
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn ok<T: Serialize + ?Sized>(body: &T) -> ApiResult {
    Ok(json_response(StatusCode::OK, body))
}

fn created_at<T: Serialize + ?Sized>(status: StatusCode, location: &str, body: &T) -> ApiResult {
    let mut resp = json_response(status, body);
    let value = HeaderValue::from_str(location).map_err(|e| ApiError::internal(e.to_string()))?;
    resp.headers_mut().insert(header::LOCATION, value);
    Ok(resp)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

/// An absent or empty body parses as the type's default.
fn parse_optional_body<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        parse_body(body)
    }
}

/// Runs a platform call off the async workers; calls may touch disk or wait on runs.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Clone)]
struct AppState {
    platform: Arc<Platform>,
    token: Option<Arc<str>>,
}

async fn auth(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let Some(token) = &state.token else { return next.run(req).await };
    let presented = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented == Some(token) {
        next.run(req).await
    } else {
        let message = if presented.is_none() { "missing bearer token" } else { "invalid bearer token" };
        ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", message).into_response()
    }
}

// services

async fn register_service(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let descriptor: ServiceDescriptor = parse_body(&body)?;
    let id = blocking(move || Ok(s.platform.register_service(descriptor)?)).await?;
    created_at(StatusCode::CREATED, &format!("/api/services/{}/{}", id.name, id.version), &id)
}

async fn list_services(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let kind = match q.get("kind") {
        None => None,
        Some(k) => Some(
            serde_json::from_value::<ServiceKind>(json!(k))
                .map_err(|_| ApiError::bad_request(format!("unknown service kind `{k}`")))?,
        ),
    };
    let filter = ServiceFilter { kind, tag: q.get("tag").cloned(), text: q.get("text").cloned() };
    ok(&s.platform.list_services(&filter))
}

async fn get_latest_service(State(s): State<AppState>, Path(name): Path<String>) -> ApiResult {
    ok(&s.platform.get_service(&name, None)?)
}

async fn get_service(State(s): State<AppState>, Path((name, version)): Path<(String, String)>) -> ApiResult {
    ok(&s.platform.get_service(&name, Some(&version))?)
}

async fn unregister_service(State(s): State<AppState>, Path((name, version)): Path<(String, String)>) -> ApiResult {
    let removed = blocking(move || Ok(s.platform.unregister_service(&name, &version)?)).await?;
    ok(&removed)
}

// workflows

#[derive(Deserialize)]
struct NewWorkflow {
    name: String,
    dsl: String,
}

#[derive(Default, Deserialize)]
#[serde(default)]
struct RunOptions {
    config: Option<ConfigurationPoint>,
}

fn route_segment(mode: WorkflowMode) -> &'static str {
    match mode {
        WorkflowMode::Stream => "streams",
        WorkflowMode::Batch => "tasks",
    }
}

async fn define_workflow(s: AppState, mode: WorkflowMode, body: Bytes) -> ApiResult {
    let req: NewWorkflow = parse_body(&body)?;
    let info = blocking(move || Ok(s.platform.define_workflow(mode, &req.name, &req.dsl)?)).await?;
    created_at(StatusCode::CREATED, &format!("/api/{}/{}", route_segment(mode), info.name), &info)
}

async fn create_stream(State(s): State<AppState>, body: Bytes) -> ApiResult {
    define_workflow(s, WorkflowMode::Stream, body).await
}

async fn create_task(State(s): State<AppState>, body: Bytes) -> ApiResult {
    define_workflow(s, WorkflowMode::Batch, body).await
}

async fn list_streams(State(s): State<AppState>) -> ApiResult {
    ok(&s.platform.list_workflows(WorkflowMode::Stream))
}

async fn list_tasks(State(s): State<AppState>) -> ApiResult {
    ok(&s.platform.list_workflows(WorkflowMode::Batch))
}

async fn get_stream(State(s): State<AppState>, Path(name): Path<String>) -> ApiResult {
    ok(&s.platform.get_workflow(WorkflowMode::Stream, &name)?)
}

async fn get_task(State(s): State<AppState>, Path(name): Path<String>) -> ApiResult {
    ok(&s.platform.get_workflow(WorkflowMode::Batch, &name)?)
}

#[derive(Serialize)]
struct RunCreated {
    run_id: String,
}

async fn deploy_stream(State(s): State<AppState>, Path(name): Path<String>, body: Bytes) -> ApiResult {
    let opts: RunOptions = parse_optional_body(&body)?;
    let run_id = blocking(move || Ok(s.platform.deploy_stream(&name, opts.config)?)).await?;
    created_at(StatusCode::CREATED, &format!("/api/runs/{run_id}"), &RunCreated { run_id })
}

async fn undeploy_stream(
    State(s): State<AppState>,
    Path(name): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let destroy = match q.get("destroy").map(String::as_str) {
        None | Some("false") => false,
        Some("true") | Some("") => true,
        Some(other) => return Err(ApiError::bad_request(format!("destroy must be true or false, got `{other}`"))),
    };
    let run = blocking(move || Ok(s.platform.undeploy_stream(&name, destroy)?)).await?;
    ok(&json!({"run": run, "destroyed": destroy}))
}

async fn delete_task(State(s): State<AppState>, Path(name): Path<String>) -> ApiResult {
    let n = name.clone();
    blocking(move || Ok(s.platform.destroy_workflow(WorkflowMode::Batch, &n)?)).await?;
    ok(&json!({"name": name, "destroyed": true}))
}

async fn launch_task(State(s): State<AppState>, Path(name): Path<String>, body: Bytes) -> ApiResult {
    let opts: RunOptions = parse_optional_body(&body)?;
    let run_id = blocking(move || Ok(s.platform.launch_task(&name, opts.config)?)).await?;
    created_at(StatusCode::ACCEPTED, &format!("/api/runs/{run_id}"), &RunCreated { run_id })
}

// runs

async fn list_runs(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let runs: Vec<_> = s
        .platform
        .list_runs()
        .into_iter()
        .filter(|r| q.get("workflow").is_none_or(|w| &r.workflow_name == w))
        .filter(|r| q.get("state").is_none_or(|st| r.state.as_str() == st))
        .collect();
    ok(&runs)
}

async fn get_run(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(&s.platform.get_run(&id)?)
}

async fn get_metrics(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(&s.platform.get_metrics(&id)?)
}

// optimizer

#[derive(Serialize)]
struct JobCreated {
    job_id: String,
}

async fn submit_job(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let request: JobRequest = parse_optional_body(&body)?;
    let job_id = blocking(move || Ok(s.platform.submit_job(request)?)).await?;
    created_at(StatusCode::ACCEPTED, &format!("/api/optimizer/jobs/{job_id}"), &JobCreated { job_id })
}

async fn get_job(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let report = blocking(move || Ok(s.platform.get_job(&id)?)).await?;
    ok(&report)
}

// viz

async fn list_sources(State(s): State<AppState>) -> ApiResult {
    ok(&s.platform.viz().list_sources())
}

async fn add_source(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let new: NewSource = parse_body(&body)?;
    let source = blocking(move || Ok(s.platform.viz().add_source(new)?)).await?;
    created_at(StatusCode::CREATED, &format!("/api/viz/sources/{}", source.id), &source)
}

async fn list_tables(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let tables = blocking(move || Ok(s.platform.viz().list_tables(&id)?)).await?;
    ok(&tables)
}

async fn viz_query(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let spec: QuerySpec = parse_body(&body)?;
    let frame = blocking(move || Ok(s.platform.viz().query(&spec)?)).await?;
    ok(&frame)
}

/// Either an inline frame or a query whose result is analysed.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecommendRequest {
    #[serde(default)]
    frame: Option<TableFrame>,
    #[serde(default)]
    query: Option<QuerySpec>,
}

async fn viz_recommend(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let req: RecommendRequest = parse_body(&body)?;
    let recs = blocking(move || {
        let viz = s.platform.viz();
        let frame = match (req.frame, req.query) {
            (Some(f), None) => f,
            (None, Some(q)) => viz.query(&q)?,
            _ => return Err(ApiError::bad_request("exactly one of `frame` or `query` is required")),
        };
        Ok(viz.recommend(&frame)?)
    })
    .await?;
    ok(&recs)
}

/// Server-sent events: one `frame` event per refresh, `error` events for failed refreshes.
/// Query parameters: `query` (a JSON query spec) and `interval_ms`.
async fn viz_refresh(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let spec: QuerySpec = match q.get("query") {
        Some(text) => serde_json::from_str(text).map_err(|e| ApiError::bad_request(format!("invalid query: {e}")))?,
        None => return Err(ApiError::bad_request("missing `query` parameter")),
    };
    let interval_ms = match q.get("interval_ms") {
        None => 1000,
        Some(v) => v.parse::<u64>().map_err(|_| ApiError::bad_request("interval_ms must be an integer"))?,
    };
    if interval_ms < MIN_REFRESH_MS {
        return Err(VizError::InvalidInterval.into());
    }
    let (tx, rx) = tokio::sync::mpsc::channel::<Event>(4);
    let handle = s.platform.viz().stream_refresh(spec, interval_ms, move |result| {
        let event = match result {
            Ok(frame) => Event::default().event("frame").data(serde_json::to_string(&frame).expect("frames serialize")),
            Err(e) => {
                let body = ApiError::from(e);
                Event::default().event("error").data(serde_json::to_string(&body).expect("errors serialize"))
            }
        };
        tx.blocking_send(event).is_ok()
    })?;
    // The handle lives in the stream state so a disconnect cancels the timer.
    let events = futures_util::stream::unfold((rx, handle), |(mut rx, handle)| async move {
        let event = rx.recv().await?;
        Some((Ok::<_, Infallible>(event), (rx, handle)))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()).into_response())
}

// dsl

#[derive(Deserialize)]
struct ParseRequest {
    #[serde(default = "default_workflow_name")]
    name: String,
    mode: WorkflowMode,
    dsl: String,
    #[serde(default)]
    validate: bool,
}

fn default_workflow_name() -> String {
    "draft".into()
}

async fn dsl_parse(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let req: ParseRequest = parse_body(&body)?;
    let def = dsl::parse(&req.name, req.mode, &req.dsl).map_err(|e| ApiError::from(PlatformError::Syntax(e)))?;
    if req.validate {
        s.platform.validate_definition(&def)?;
    }
    ok(&def)
}

async fn dsl_serialize(body: Bytes) -> ApiResult {
    let def: WorkflowDefinition = parse_body(&body)?;
    let text = dsl::serialize(&def).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_definition", e.to_string()))?;
    ok(&json!({"dsl": text}))
}

async fn health() -> ApiResult {
    ok(&json!({"status": "ok"}))
}

async fn api_not_found(req: Request) -> ApiError {
    ApiError::not_found(format!("no route for {}", req.uri().path()))
}

async fn method_not_allowed(req: Request) -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", format!("{} not allowed on {}", req.method(), req.uri().path()))
}

const PLACEHOLDER_UI: &str = "<!doctype html>\n<html><head><title>flowforge</title></head>\n<body><h1>flowforge</h1>\n<p>No UI bundle is installed. Set FLOWFORGE_UI_DIR to a directory of static assets, or use the API under <code>/api</code>.</p>\n</body></html>\n";

/// Builds the application. `ui_dir` holds static assets served under `/ui`.
pub fn router(platform: Arc<Platform>, token: Option<String>, ui_dir: Option<PathBuf>) -> Router {
    let state = AppState { platform, token: token.filter(|t| !t.is_empty()).map(Arc::from) };
    let api = Router::new()
        .route("/services", post(register_service).get(list_services))
        .route("/services/{name}", get(get_latest_service))
        .route("/services/{name}/{version}", get(get_service).delete(unregister_service))
        .route("/streams", post(create_stream).get(list_streams))
        .route("/streams/{name}", get(get_stream).delete(undeploy_stream))
        .route("/streams/{name}/deploy", post(deploy_stream))
        .route("/tasks", post(create_task).get(list_tasks))
        .route("/tasks/{name}", get(get_task).delete(delete_task))
        .route("/tasks/{name}/launch", post(launch_task))
        .route("/runs", get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/metrics", get(get_metrics))
        .route("/optimizer/jobs", post(submit_job))
        .route("/optimizer/jobs/{id}", get(get_job))
        .route("/viz/sources", get(list_sources).post(add_source))
        .route("/viz/sources/{id}/tables", get(list_tables))
        .route("/viz/query", post(viz_query))
        .route("/viz/recommend", post(viz_recommend))
        .route("/viz/refresh", get(viz_refresh))
        .route("/dsl/parse", post(dsl_parse))
        .route("/dsl/serialize", post(dsl_serialize))
        .fallback(api_not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .route_layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state);
    let ui: Router = match ui_dir {
        Some(dir) => Router::new().fallback_service(ServeDir::new(dir)),
        None => Router::new().fallback(|| async { Html(PLACEHOLDER_UI) }),
    };
    Router::new()
        .route("/health", get(health))
        .nest("/api", api)
        .nest_service("/ui", ui)
        .fallback(api_not_found)
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Server settings; `from_env` reads `FLOWFORGE_PORT`, `FLOWFORGE_DATA_DIR`,
/// `FLOWFORGE_AUTH_TOKEN` and `FLOWFORGE_UI_DIR`.
#[derive(Debug, Clone, PartialEq)]
pub struct ServeConfig {
    pub host: std::net::IpAddr,
    pub port: u16,
    pub data_dir: PathBuf,
    pub auth_token: Option<String>,
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            host: [127, 0, 0, 1].into(),
            port: DEFAULT_PORT,
            data_dir: DEFAULT_DATA_DIR.into(),
            auth_token: None,
            ui_dir: None,
        }
    }
}

impl ServeConfig {
    pub fn from_env() -> Result<Self, String> {
        let mut c = ServeConfig::default();
        if let Ok(p) = std::env::var("FLOWFORGE_PORT") {
            c.port = p.parse().map_err(|_| format!("FLOWFORGE_PORT is not a port number: `{p}`"))?;
        }
        if let Ok(d) = std::env::var("FLOWFORGE_DATA_DIR") {
            c.data_dir = d.into();
        }
        c.auth_token = std::env::var("FLOWFORGE_AUTH_TOKEN").ok().filter(|t| !t.is_empty());
        c.ui_dir = std::env::var("FLOWFORGE_UI_DIR").ok().map(PathBuf::from);
        Ok(c)
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.host, self.port)
    }
}

/// Serves until `shutdown` resolves, then undeploys running streams.
pub async fn serve(config: ServeConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), GatewayError> {
    let data_dir = config.data_dir.clone();
    let platform = Arc::new(tokio::task::spawn_blocking(move || Platform::open(data_dir)).await.map_err(std::io::Error::other)??);
    let listener = tokio::net::TcpListener::bind(config.addr())
        .await
        .map_err(|source| GatewayError::Bind { addr: config.addr(), source })?;
    let app = router(platform.clone(), config.auth_token, config.ui_dir);
    serve_until(listener, app, shutdown).await?;
    tokio::task::spawn_blocking(move || platform.shutdown()).await.map_err(std::io::Error::other)?;
    Ok(())
}

/// How long open connections may drain after shutdown; SSE subscribers never finish on their own.
const DRAIN: Duration = Duration::from_secs(1);

async fn serve_until(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let (fired, mut fired_rx) = tokio::sync::watch::channel(false);
    let graceful = async move {
        shutdown.await;
        let _ = fired.send(true);
    };
    let mut server = tokio::spawn(axum::serve(listener, app).with_graceful_shutdown(graceful).into_future());
    // an Err here means the server ended before shutdown was requested
    let _ = fired_rx.wait_for(|f| *f).await;
    match tokio::time::timeout(DRAIN, &mut server).await {
        Ok(joined) => joined.map_err(std::io::Error::other)?,
        Err(_) => {
            server.abort();
            Ok(())
        }
    }
}

/// A server on its own runtime thread.
pub struct RunningServer {
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    /// Binds `addr` (port 0 picks a free port) and serves `platform` in the background.
    pub fn start(
        platform: Arc<Platform>,
        addr: SocketAddr,
        token: Option<String>,
        ui_dir: Option<PathBuf>,
    ) -> Result<Self, GatewayError> {
        let std_listener = std::net::TcpListener::bind(addr).map_err(|source| GatewayError::Bind { addr, source })?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let app = router(platform, token, ui_dir);
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
                let _ = serve_until(listener, app, async {
                    let _ = stopped.await;
                })
                .await;
            });
            runtime.shutdown_timeout(Duration::from_secs(1));
        });
        Ok(RunningServer { addr, stop: Some(stop), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}
