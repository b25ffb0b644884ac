//! HTTP API over live dialog sessions, versioned under `/v1`.
//!
//! | route                              | body                                   | success |
//! |------------------------------------|----------------------------------------|---------|
//! | `POST /v1/sessions`                | `{template_id?, backend?}`             | 201     |
//! | `GET  /v1/sessions/{id}`           |                                        | 200     |
//! | `POST /v1/sessions/{id}/messages`  | `{text}`                               | 200     |
//! | `POST /v1/sessions/{id}/simulate`  | `{sample_count?, seed?, sensitivity?}` | 200     |
//! | `POST /v1/sessions/{id}/whatif`    | `{slots?, parameters?, sample_count?, seed?, sensitivity?}` | 200 |
//! | `POST /v1/sessions/{id}/feedback`  | `{rating?, text}`                      | 204     |
//! | `GET  /healthz`, `GET /v1/healthz` |                                        | 200     |
//!
//! Errors are `{"error": code, "message": ..., ...}`.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use decisim_core::{ComparisonReport, DecisionProblem, Distribution};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::analysis::{analyze, default_workers, report_json, AnalysisError, RunOptions};
use crate::dialog::{
    build_from_values, build_problem, AgentBackend, BuildError, DialogState, Phase, ScriptedBackend, SimConfig,
    TemplateRegistry,
};
use crate::doc::{from_json_with_path, DistDoc, ProblemDoc, DEFAULT_SAMPLE_COUNT, DEFAULT_SEED};
use crate::warehouse::{Feedback, SessionRecord, SimulationConfig, Store, WarehouseError};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub default_sample_count: usize,
    pub default_seed: u64,
    /// Requests asking for more samples are rejected.
    pub max_samples: usize,
    pub request_timeout: Duration,
    pub workers: usize,
    /// Allowed browser origins; `"*"` allows any.
    pub cors_origins: Vec<String>,
    /// One JSON line per request on stdout.
    pub log_requests: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            default_sample_count: DEFAULT_SAMPLE_COUNT,
            default_seed: DEFAULT_SEED,
            max_samples: 2_000_000,
            request_timeout: Duration::from_secs(30),
            workers: default_workers(),
            cors_origins: vec!["http://localhost:5173".into(), "http://127.0.0.1:5173".into()],
            log_requests: true,
        }
    }
}

struct LiveSession {
    dialog: DialogState,
    backend: Arc<dyn AgentBackend>,
    backend_name: String,
    last_report: Option<ComparisonReport>,
    last_record: Option<String>,
    runs: u32,
    created_at: u64,
}

pub struct AppState {
    config: ServiceConfig,
    store: Arc<Store>,
    templates: TemplateRegistry,
    backends: BTreeMap<String, Arc<dyn AgentBackend>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<LiveSession>>>>,
}

pub struct Service {
    state: AppState,
}

impl Service {
    pub fn new(store: Arc<Store>, config: ServiceConfig) -> Self {
        let mut backends: BTreeMap<String, Arc<dyn AgentBackend>> = BTreeMap::new();
        backends.insert("scripted".into(), Arc::new(ScriptedBackend::new()));
        Self {
            state: AppState {
                config,
                store,
                templates: TemplateRegistry::default(),
                backends,
                sessions: RwLock::new(HashMap::new()),
            },
        }
    }

    pub fn with_backend(mut self, name: &str, backend: Arc<dyn AgentBackend>) -> Self {
        self.state.backends.insert(name.to_string(), backend);
        self
    }

    pub fn with_templates(mut self, templates: TemplateRegistry) -> Self {
        self.state.templates = templates;
        self
    }

    pub fn router(self) -> Router {
        let cors = cors_layer(&self.state.config.cors_origins);
        let log = self.state.config.log_requests;
        let state = Arc::new(self.state);
        let api = Router::new()
            .route("/healthz", get(healthz))
            .route("/sessions", post(create_session))
            .route("/sessions/{id}", get(get_session))
            .route("/sessions/{id}/messages", post(post_message))
            .route("/sessions/{id}/simulate", post(simulate))
            .route("/sessions/{id}/whatif", post(whatif))
            .route("/sessions/{id}/feedback", post(feedback));
        let mut router = Router::new()
            .route("/healthz", get(healthz))
            .nest("/v1", api)
            .with_state(state)
            .layer(cors);
        if log {
            router = router.layer(middleware::from_fn(log_request));
        }
        router
    }
}

fn cors_layer(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    if origins.iter().any(|o| o == "*") {
        layer.allow_origin(Any)
    } else {
        let list: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
        layer.allow_origin(AllowOrigin::list(list))
    }
}

async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().to_string();
    let path = req.uri().path().to_string();
    let started = Instant::now();
    let res = next.run(req).await;
    let line = json!({
        "ts": now_ms(),
        "method": method,
        "path": path,
        "status": res.status().as_u16(),
        "latency_ms": started.elapsed().as_secs_f64() * 1000.0,
    });
    println!("{line}");
    res
}

/// Bind and serve until Ctrl-C.
pub async fn serve(addr: SocketAddr, service: Service) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, service.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    extra: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            extra: None,
        }
    }

    fn with(mut self, extra: Value) -> Self {
        self.extra = Some(extra);
        self
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`"))
    }

    fn incomplete(missing: Vec<String>) -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "incomplete_slots",
            format!("required slots are missing: {}", missing.join(", ")),
        )
        .with(json!({ "missing": missing }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(Value::Object(extra)) = self.extra {
            body.as_object_mut().expect("object").extend(extra);
        }
        (self.status, axum::Json(body)).into_response()
    }
}

impl From<BuildError> for ApiError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::IncompleteSlots(missing) => ApiError::incomplete(missing),
            BuildError::Warehouse(w) => w.into(),
            BuildError::Invalid(report) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_problem", "built problem failed validation")
                .with(json!({ "violations": report.violations })),
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_problem", other.to_string()),
        }
    }
}

impl From<WarehouseError> for ApiError {
    fn from(e: WarehouseError) -> Self {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "store_unavailable", e.to_string())
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Invalid(report) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_problem", "problem failed validation")
                .with(json!({ "violations": report.violations })),
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "simulation_failed", other.to_string()),
        }
    }
}

/// Parse a JSON body; an empty body reads as `{}`.
fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let bytes: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    from_json_with_path(bytes).map_err(|(field, message)| {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", message).with(json!({ "field": field }))
    })
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

impl AppState {
    fn session(&self, id: &str) -> Result<Arc<Mutex<LiveSession>>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    fn sim_config(&self, sample_count: Option<usize>, seed: Option<u64>) -> Result<SimConfig, ApiError> {
        let sample_count = sample_count.unwrap_or(self.config.default_sample_count);
        if sample_count > self.config.max_samples {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "sample_cap_exceeded",
                format!("sample_count {sample_count} exceeds the cap of {}", self.config.max_samples),
            )
            .with(json!({ "field": "sample_count", "max_samples": self.config.max_samples })));
        }
        Ok(SimConfig {
            sample_count,
            seed: seed.unwrap_or(self.config.default_seed),
        })
    }

    async fn run(&self, problem: DecisionProblem, sensitivity: bool) -> Result<ComparisonReport, ApiError> {
        let opts = RunOptions {
            workers: self.config.workers,
            sensitivity,
        };
        let task = tokio::task::spawn_blocking(move || analyze(&problem, opts));
        match tokio::time::timeout(self.config.request_timeout, task).await {
            Err(_) => Err(ApiError::new(
                StatusCode::GATEWAY_TIMEOUT,
                "timeout",
                format!("simulation exceeded {:?}", self.config.request_timeout),
            )),
            Ok(Err(join)) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", join.to_string())),
            Ok(Ok(result)) => Ok(result?.report),
        }
    }
}

fn session_view(id: &str, s: &LiveSession) -> Value {
    json!({
        "session_id": id,
        "template_id": s.dialog.template_id,
        "backend": s.backend_name,
        "phase": s.dialog.phase,
        "filled_slots": s.dialog.filled_values(),
        "pending_slots": s.dialog.pending,
        "awaiting_confirmation": s.dialog.awaiting_confirmation,
        "transcript": s.dialog.transcript,
        "last_record_id": s.last_record,
        "runs": s.runs,
        "created_at": s.created_at,
    })
}

async fn healthz() -> impl IntoResponse {
    axum::Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    #[serde(default)]
    template_id: Option<String>,
    #[serde(default)]
    backend: Option<String>,
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = parse_body(&body)?;
    let template_id = req.template_id.unwrap_or_else(|| crate::dialog::template::BUILTIN_TEMPLATE_ID.into());
    let template = app.templates.get(&template_id).ok_or_else(|| {
        ApiError::new(StatusCode::BAD_REQUEST, "unknown_template", format!("no template `{template_id}`"))
            .with(json!({ "field": "template_id" }))
    })?;
    let backend_name = req.backend.unwrap_or_else(|| "scripted".into());
    let backend = app.backends.get(&backend_name).cloned().ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "unknown_backend",
            format!("backend `{backend_name}` is not configured"),
        )
        .with(json!({ "field": "backend" }))
    })?;

    let id = format!("{:032x}", rand::random::<u128>());
    let mut dialog = DialogState::new(&id, template);
    let first_question = dialog.open(backend.as_ref());
    let body = json!({
        "session_id": id,
        "first_question": first_question,
        "phase": dialog.phase,
        "pending_slots": dialog.pending,
    });
    let live = LiveSession {
        dialog,
        backend,
        backend_name,
        last_report: None,
        last_record: None,
        runs: 0,
        created_at: now_ms(),
    };
    app.sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(id, Arc::new(Mutex::new(live)));
    Ok((StatusCode::CREATED, axum::Json(body)).into_response())
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = app.session(&id)?;
    let s = session.lock().await;
    Ok(axum::Json(session_view(&id, &s)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageRequest {
    text: String,
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let session = app.session(&id)?;
    let req: MessageRequest = parse_body(&body)?;
    let mut s = session.lock().await;
    let backend = Arc::clone(&s.backend);
    let reply = s
        .dialog
        .advance(&req.text, backend.as_ref())
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "session_closed", "session is closed"))?;
    Ok(axum::Json(json!({
        "agent_reply": reply,
        "phase": s.dialog.phase,
        "filled_slots": s.dialog.filled_values(),
        "pending_slots": s.dialog.pending,
        "awaiting_confirmation": s.dialog.awaiting_confirmation,
    }))
    .into_response())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SimOverrides {
    #[serde(default)]
    sample_count: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateRequest {
    #[serde(default)]
    sample_count: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    overrides: Option<SimOverrides>,
    #[serde(default = "yes")]
    sensitivity: bool,
}

fn yes() -> bool {
    true
}

fn guard_open(s: &LiveSession) -> Result<(), ApiError> {
    match s.dialog.phase {
        Phase::Closed => Err(ApiError::new(StatusCode::CONFLICT, "session_closed", "session is closed")),
        Phase::Collecting => Err(ApiError::incomplete(s.dialog.pending.clone())),
        _ => Ok(()),
    }
}

async fn simulate(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let session = app.session(&id)?;
    let req: SimulateRequest = parse_body(&body)?;
    let o = req.overrides.unwrap_or_default();
    let sim = app.sim_config(o.sample_count.or(req.sample_count), o.seed.or(req.seed))?;

    let mut s = session.lock().await;
    guard_open(&s)?;
    let problem = build_problem(&s.dialog, app.store.as_ref(), sim)?;
    let doc = ProblemDoc::from_problem(&problem);
    let report = app.run(problem, req.sensitivity).await?;

    let run = s.runs + 1;
    let record = SessionRecord {
        id: format!("{id}.{run}"),
        session_id: id.clone(),
        created_at: now_ms(),
        template_id: Some(s.dialog.template_id.clone()),
        objective: doc.objective.clone(),
        problem: doc,
        simulation: SimulationConfig {
            seed: sim.seed,
            sample_count: sim.sample_count,
            sensitivity: req.sensitivity,
        },
        report: report.clone(),
        transcript: s.dialog.transcript.clone(),
        feedback: None,
    };
    let record_id = app.store.record_session(record)?;
    s.runs = run;
    s.last_record = Some(record_id);
    s.dialog.mark_simulated();
    let body = report_json(&report);
    s.last_report = Some(report);
    Ok(json_response(StatusCode::OK, body))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ParamOverride {
    Value(f64),
    Dist(DistDoc),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WhatIfRequest {
    #[serde(default)]
    slots: BTreeMap<String, f64>,
    /// `parameter` (every alternative binding it) or `alternative.parameter`.
    #[serde(default)]
    parameters: BTreeMap<String, ParamOverride>,
    #[serde(default)]
    sample_count: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default = "yes")]
    sensitivity: bool,
}

fn apply_parameter_overrides(
    problem: &mut DecisionProblem,
    overrides: &BTreeMap<String, ParamOverride>,
) -> Result<(), ApiError> {
    for (key, o) in overrides {
        let dist = match o {
            ParamOverride::Value(v) => Distribution::fixed(*v),
            ParamOverride::Dist(d) => (*d).into(),
        };
        let (alt_filter, param) = match key.split_once('.') {
            Some((a, p)) => (Some(a), p),
            None => (None, key.as_str()),
        };
        let mut hit = false;
        for alt in &mut problem.alternatives {
            if alt_filter.is_some_and(|a| a != alt.name) {
                continue;
            }
            if let Some(spec) = alt.bindings.get_mut(param) {
                spec.distribution = dist;
                spec.provenance = decisim_core::Provenance::UserSupplied;
                hit = true;
            }
        }
        if !hit {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "unknown_parameter",
                format!("no parameter `{key}`"),
            )
            .with(json!({ "field": format!("parameters.{key}") })));
        }
    }
    let report = decisim_core::validate_problem(problem);
    if !report.is_valid() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_override", "overrides make the problem invalid")
            .with(json!({ "violations": report.violations })));
    }
    Ok(())
}

async fn whatif(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let session = app.session(&id)?;
    let req: WhatIfRequest = parse_body(&body)?;
    let sim = app.sim_config(req.sample_count, req.seed)?;

    let problem = {
        let s = session.lock().await;
        guard_open(&s)?;
        let template = s.dialog.template_arc();
        let mut values = s.dialog.filled_values();
        for (slot, v) in &req.slots {
            if template.slot(slot).is_none() {
                return Err(ApiError::new(StatusCode::BAD_REQUEST, "unknown_slot", format!("no slot `{slot}`"))
                    .with(json!({ "field": format!("slots.{slot}") })));
            }
            if !v.is_finite() || *v < 0.0 {
                return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_value", format!("bad value for `{slot}`"))
                    .with(json!({ "field": format!("slots.{slot}") })));
            }
            values.insert(slot.clone(), *v);
        }
        build_from_values(&template, &values, app.store.as_ref(), sim)?
    };
    let mut problem = problem;
    apply_parameter_overrides(&mut problem, &req.parameters)?;
    let report = app.run(problem, req.sensitivity).await?;
    Ok(json_response(StatusCode::OK, report_json(&report)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRequest {
    #[serde(default)]
    rating: Option<u8>,
    text: String,
}

async fn feedback(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let session = app.session(&id)?;
    let req: FeedbackRequest = parse_body(&body)?;
    if req.rating.is_some_and(|r| !(1..=5).contains(&r)) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", "rating must be 1 to 5")
            .with(json!({ "field": "rating" })));
    }
    let mut s = session.lock().await;
    let Some(record_id) = s.last_record.clone() else {
        return Err(ApiError::new(StatusCode::CONFLICT, "no_report", "simulate before leaving feedback"));
    };
    app.store.attach_feedback(
        &record_id,
        Feedback {
            rating: req.rating,
            text: req.text,
        },
    )?;
    s.dialog.close();
    Ok(StatusCode::NO_CONTENT.into_response())
}
