//! HTTP sidecar in front of the agent's model.
//!
//! Agent frameworks point their chat-completion base URL at the gateway.
//! Requests without ReAct scaffolding are forwarded untouched. For agent
//! steps the gateway forwards the request, buffers the reply, corrects the
//! thought, asks the upstream for the action again from the corrected
//! context, and only returns that aligned step to the agent. The framework
//! never sees the pre-correction thought or the action derived from it.

pub mod audit;
pub mod classify;
pub mod config;
pub mod overhead;
pub mod streaming;
pub mod wire;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use axum::extract::{ConnectInfo, State};
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use bytes::Bytes;
use thiserror::Error;
use tracing::{error, info, warn};

use crate::chat::{ChatMessage, Role};
use crate::engine::{
    AlignmentEngine, CorrectionBackend, CorrectionPolicy, EngineError,
    IdentityBackend, RemoteBackend, RuleBackend, UpstreamError, UpstreamModel,
};
use crate::session::SessionId;
use crate::trajectory::{parse_react_step, render_react_step, Instruction, ParsedStep, ThoughtStep};

pub use audit::{AuditLog, AuditRecord, FsyncPolicy};
pub use classify::{Classifier, RequestKind};
pub use config::{ConfigError, GatewayConfig};
pub use overhead::{measure_overhead, LatencyReport, OverheadError};
pub use wire::ChatRequest;

pub const POLICY_HEADER: &str = "x-aligner-policy";
pub const CHANGED_HEADER: &str = "x-aligner-changed";
pub const COMPLETIONS_PATH: &str = "/v1/chat/completions";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Audit(#[from] audit::AuditError),
    #[error("loading rule backend: {0}")]
    Rules(#[from] crate::engine::backend::RuleFileError),
    #[error("binding {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

/// Raw upstream reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpstreamReply {
    pub status: u16,
    pub content_type: Option<String>,
    pub body: Bytes,
}

/// Where forwarded request bodies go.
#[async_trait]
pub trait UpstreamTransport: Send + Sync {
    async fn send(
        &self,
        body: Bytes,
        headers: &HeaderMap,
        deadline: Duration,
    ) -> Result<UpstreamReply, UpstreamError>;
}

pub struct HttpTransport {
    client: reqwest::Client,
    endpoint: String,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        Self {
            client: reqwest::Client::new(),
            endpoint: format!("{}{COMPLETIONS_PATH}", base_url.trim_end_matches('/')),
        }
    }
}

#[async_trait]
impl UpstreamTransport for HttpTransport {
    async fn send(
        &self,
        body: Bytes,
        headers: &HeaderMap,
        deadline: Duration,
    ) -> Result<UpstreamReply, UpstreamError> {
        let mut headers = headers.clone();
        headers
            .entry(header::CONTENT_TYPE)
            .or_insert(HeaderValue::from_static("application/json"));
        let response = self
            .client
            .post(&self.endpoint)
            .headers(headers)
            .timeout(deadline)
            .body(body)
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() {
                    UpstreamError::Timeout
                } else {
                    UpstreamError::Unreachable(e.to_string())
                }
            })?;
        let status = response.status().as_u16();
        let content_type = response
            .headers()
            .get(header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = response.bytes().await.map_err(|e| {
            if e.is_timeout() {
                UpstreamError::Timeout
            } else {
                UpstreamError::Unreachable(e.to_string())
            }
        })?;
        Ok(UpstreamReply {
            status,
            content_type,
            body,
        })
    }
}

/// The upstream as an [`UpstreamModel`] for one intercepted request: same
/// model, sampling settings and credentials, new messages.
struct RequestUpstream<'a> {
    transport: &'a dyn UpstreamTransport,
    request: &'a ChatRequest,
    headers: &'a HeaderMap,
}

#[async_trait]
impl UpstreamModel for RequestUpstream<'_> {
    async fn complete(
        &self,
        messages: &[ChatMessage],
        deadline: Duration,
    ) -> Result<String, UpstreamError> {
        let body = serde_json::to_vec(&self.request.with_messages(messages))
            .expect("request serializes");
        let reply = self
            .transport
            .send(Bytes::from(body), self.headers, deadline)
            .await?;
        if !(200..300).contains(&reply.status) {
            return Err(UpstreamError::Status(reply.status));
        }
        if streaming::is_event_stream(reply.content_type.as_deref()) {
            return streaming::buffer_sse(&reply.body)
                .map(|b| b.content)
                .map_err(|e| UpstreamError::BadResponse(e.to_string()));
        }
        wire::completion_content(&reply.body).map_err(|e| UpstreamError::BadResponse(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct GatewayResponse {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Bytes,
}

impl GatewayResponse {
    fn from_upstream(reply: UpstreamReply) -> Self {
        let mut headers = HeaderMap::new();
        if let Some(ct) = reply.content_type.and_then(|c| HeaderValue::from_str(&c).ok()) {
            headers.insert(header::CONTENT_TYPE, ct);
        }
        Self {
            status: StatusCode::from_u16(reply.status).unwrap_or(StatusCode::BAD_GATEWAY),
            headers,
            body: reply.body,
        }
    }

    fn error(status: StatusCode, message: impl std::fmt::Display) -> Self {
        let mut headers = HeaderMap::new();
        headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
        let body = serde_json::json!({"error": {"message": message.to_string(), "code": status.as_u16()}});
        Self {
            status,
            headers,
            body: Bytes::from(body.to_string()),
        }
    }

    fn upstream_error(e: &UpstreamError) -> Self {
        match e {
            UpstreamError::Timeout => Self::error(StatusCode::GATEWAY_TIMEOUT, e),
            _ => Self::error(StatusCode::BAD_GATEWAY, e),
        }
    }
}

impl IntoResponse for GatewayResponse {
    fn into_response(self) -> Response {
        (self.status, self.headers, self.body).into_response()
    }
}

fn policy_value(p: CorrectionPolicy) -> HeaderValue {
    HeaderValue::from_static(match p {
        CorrectionPolicy::Corrected => "corrected",
        CorrectionPolicy::Identity => "identity",
        CorrectionPolicy::FailOpenOriginal => "fail-open",
    })
}

/// Headers that must not be forwarded by a proxy, plus ones the transport
/// recomputes.
const HOP_HEADERS: [&str; 10] = [
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
    "host",
    "content-length",
];

fn forward_headers(incoming: &HeaderMap, session_header: &str) -> HeaderMap {
    let mut out = HeaderMap::new();
    for (name, value) in incoming {
        let n = name.as_str();
        if HOP_HEADERS.contains(&n) || n.eq_ignore_ascii_case(session_header) {
            continue;
        }
        out.append(name.clone(), value.clone());
    }
    out
}

/// Observation carried by the newest message, if it follows an assistant turn.
fn trailing_observation(req: &ChatRequest) -> Option<String> {
    let (last, earlier) = req.messages.split_last()?;
    if !earlier.iter().any(|m| m.role == Role::Assistant) {
        return None;
    }
    match last.role {
        Role::Tool => Some(last.text()),
        Role::User => {
            let text = last.text();
            let trimmed = text.trim_start();
            Some(
                trimmed
                    .strip_prefix("Observation:")
                    .map(|s| s.trim().to_string())
                    .unwrap_or(text),
            )
        }
        _ => None,
    }
}

pub struct Gateway {
    config: GatewayConfig,
    engine: Arc<AlignmentEngine>,
    backend: Arc<dyn CorrectionBackend>,
    transport: Arc<dyn UpstreamTransport>,
    classifier: Classifier,
    audit: Option<AuditLog>,
}

pub fn backend_from_selector(
    selector: &str,
    aligner_base_url: Option<&str>,
    aligner_model: &str,
) -> Result<Arc<dyn CorrectionBackend>, GatewayError> {
    Ok(match selector {
        "identity" => Arc::new(IdentityBackend),
        "remote" => {
            let url = aligner_base_url.ok_or_else(|| {
                ConfigError::Invalid("backend \"remote\" needs aligner_base_url".into())
            })?;
            Arc::new(RemoteBackend::new(url, aligner_model))
        }
        other => match other.strip_prefix("rule:") {
            Some(path) => Arc::new(RuleBackend::from_file(path)?),
            None => return Err(ConfigError::Invalid(format!("unknown backend {other:?}")).into()),
        },
    })
}

impl Gateway {
    pub fn new(
        config: GatewayConfig,
        backend: Arc<dyn CorrectionBackend>,
        transport: Arc<dyn UpstreamTransport>,
    ) -> Result<Self, GatewayError> {
        config.validate()?;
        let audit = config
            .audit_log_path
            .as_ref()
            .map(|p| AuditLog::open(p, config.audit_fsync))
            .transpose()?;
        Ok(Self {
            engine: Arc::new(AlignmentEngine::new(config.engine_config())),
            classifier: Classifier::new(config.react_markers.clone(), config.react_min_markers),
            backend,
            transport,
            audit,
            config,
        })
    }

    /// Gateway talking to real HTTP endpoints as configured.
    pub fn from_config(config: GatewayConfig) -> Result<Self, GatewayError> {
        let backend = backend_from_selector(
            &config.backend,
            config.aligner_base_url.as_deref(),
            &config.aligner_model,
        )?;
        let transport = Arc::new(HttpTransport::new(&config.upstream_base_url));
        Self::new(config, backend, transport)
    }

    pub fn engine(&self) -> &AlignmentEngine {
        &self.engine
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    fn session_id(&self, headers: &HeaderMap, client: &str, req: &ChatRequest) -> SessionId {
        headers
            .get(self.config.session_header_name.as_str())
            .and_then(|v| v.to_str().ok())
            .and_then(|v| SessionId::new(v.trim()).ok())
            .unwrap_or_else(|| SessionId::derive(client, &req.first_user_text().unwrap_or_default()))
    }

    /// Handle one `POST /v1/chat/completions` body.
    pub async fn handle(&self, headers: &HeaderMap, client: &str, body: Bytes) -> GatewayResponse {
        let req = match ChatRequest::parse(&body) {
            Ok(r) => r,
            Err(e) => return GatewayResponse::error(StatusCode::BAD_REQUEST, e),
        };
        let forwarded = forward_headers(headers, &self.config.session_header_name);
        let deadline = self.engine.config().upstream_deadline;
        match self.classifier.classify(&req) {
            RequestKind::Passthrough => match self.transport.send(body, &forwarded, deadline).await {
                Ok(reply) => GatewayResponse::from_upstream(reply),
                Err(e) => GatewayResponse::upstream_error(&e),
            },
            RequestKind::AgentStep => {
                let id = self.session_id(headers, client, &req);
                self.handle_agent_step(id, req, body, forwarded).await
            }
        }
    }

    async fn handle_agent_step(
        &self,
        id: SessionId,
        req: ChatRequest,
        body: Bytes,
        forwarded: HeaderMap,
    ) -> GatewayResponse {
        let store = self.engine.store();
        let text = req
            .first_user_text()
            .filter(|t| !t.trim().is_empty())
            .or_else(|| req.messages.last().map(|m| m.text()))
            .unwrap_or_default();
        if text.trim().is_empty() {
            return GatewayResponse::error(StatusCode::BAD_REQUEST, "agent request has no instruction text");
        }
        let instruction = Instruction {
            id: id.to_string(),
            text,
            scenario: None,
        };
        store.get_or_create(id.clone(), instruction);
        let observation = trailing_observation(&req);
        let preamble: Vec<ChatMessage> = {
            let end = req
                .messages
                .iter()
                .position(|m| m.role == Role::User)
                .map_or(req.messages.len(), |i| i + 1);
            req.messages[..end].iter().map(|m| m.to_chat()).collect()
        };
        let _ = store.with_session(&id, |s| {
            if s.context.is_empty() && s.step_count == 0 {
                s.context = preamble;
            }
            let pending = s.trajectory.steps.last().is_some_and(|st| st.observation.is_none());
            if pending {
                match observation {
                    Some(obs) => s.trajectory.steps.last_mut().unwrap().observation = Some(obs),
                    // The agent re-asked without reporting an observation: the
                    // pending step never ran.
                    None => {
                        s.trajectory.steps.pop();
                        s.step_count -= 1;
                    }
                }
            }
        });

        let deadline = self.engine.config().upstream_deadline;
        let reply = match self.transport.send(body, &forwarded, deadline).await {
            Ok(r) => r,
            Err(e) => return GatewayResponse::upstream_error(&e),
        };
        if !(200..300).contains(&reply.status) {
            return GatewayResponse::from_upstream(reply);
        }
        let streamed = streaming::is_event_stream(reply.content_type.as_deref());
        let extracted = if streamed {
            streaming::buffer_sse(&reply.body).map(|b| (b.content, Some(b.envelope))).map_err(|e| e.to_string())
        } else {
            wire::completion_content(&reply.body).map(|c| (c, None)).map_err(|e| e.to_string())
        };
        let (content, envelope) = match extracted {
            Ok(x) => x,
            Err(e) => {
                warn!(session = %id, error = %e, "could not read upstream reply, passing through");
                return GatewayResponse::from_upstream(reply);
            }
        };
        let original = match parse_react_step(&content) {
            Ok(s) => s,
            Err(e) => {
                warn!(session = %id, error = %e, "upstream reply is not a ReAct step, passing through");
                let mut resp = GatewayResponse::from_upstream(reply);
                resp.headers.insert(POLICY_HEADER, HeaderValue::from_static("unparsed"));
                return resp;
            }
        };

        let correction = match self
            .engine
            .align_thought(&id, original.thought(), self.backend.as_ref())
            .await
        {
            Ok(c) => c,
            Err(EngineError::BackendFailure(e)) => {
                return GatewayResponse::error(StatusCode::SERVICE_UNAVAILABLE, format!("correction backend failed: {e}"))
            }
            Err(e) => return GatewayResponse::error(StatusCode::INTERNAL_SERVER_ERROR, e),
        };

        let upstream = RequestUpstream {
            transport: self.transport.as_ref(),
            request: &req,
            headers: &forwarded,
        };
        let regen = match self
            .engine
            .regenerate_from_messages(req.chat_messages(), &original, &correction, &upstream)
            .await
        {
            Ok(r) => r,
            Err(EngineError::UpstreamFailure(e)) => return GatewayResponse::upstream_error(&e),
            Err(e @ EngineError::Malformed { .. }) => {
                return GatewayResponse::error(StatusCode::BAD_GATEWAY, e)
            }
            Err(e) => return GatewayResponse::error(StatusCode::INTERNAL_SERVER_ERROR, e),
        };

        let aligned_text = render_react_step(&regen.step);
        let out_body = match &envelope {
            Some(env) => streaming::render_sse(env, &aligned_text),
            None => match wire::splice_content(&reply.body, &aligned_text) {
                Ok(b) => b,
                Err(e) => return GatewayResponse::error(StatusCode::BAD_GATEWAY, e),
            },
        };

        let step_index = store
            .with_session(&id, |s| {
                let index = s.step_count;
                match &regen.step {
                    ParsedStep::Step {
                        thought,
                        action,
                        action_input,
                    } => {
                        s.trajectory
                            .steps
                            .push(ThoughtStep::new(index, thought, action, action_input));
                        s.step_count += 1;
                    }
                    ParsedStep::Final { thought, answer } => {
                        s.trajectory.final_thought = Some(thought.clone());
                        s.trajectory.final_answer = Some(answer.clone());
                    }
                }
                index
            })
            .unwrap_or(0);

        if let Some(log) = &self.audit {
            if let Err(e) = log.append(&AuditRecord::new(&id, step_index, &correction)) {
                error!(error = %e, "audit append failed");
            }
        }
        if correction.policy == CorrectionPolicy::FailOpenOriginal {
            warn!(session = %id, step = step_index, "responding with uncorrected step");
        }

        let mut headers = HeaderMap::new();
        headers.insert(
            header::CONTENT_TYPE,
            HeaderValue::from_static(if streamed { "text/event-stream" } else { "application/json" }),
        );
        headers.insert(POLICY_HEADER, policy_value(correction.policy));
        headers.insert(
            CHANGED_HEADER,
            HeaderValue::from_static(if correction.changed { "true" } else { "false" }),
        );
        if let Ok(v) = HeaderValue::from_str(id.as_str()) {
            if let Ok(name) = HeaderName::from_bytes(self.config.session_header_name.as_bytes()) {
                headers.insert(name, v);
            }
        }
        GatewayResponse {
            status: StatusCode::OK,
            headers,
            body: Bytes::from(out_body),
        }
    }
}

async fn completions(
    State(gateway): State<Arc<Gateway>>,
    ConnectInfo(addr): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    body: Bytes,
) -> GatewayResponse {
    let started = Instant::now();
    let resp = gateway.handle(&headers, &addr.ip().to_string(), body).await;
    info!(status = resp.status.as_u16(), elapsed_ms = started.elapsed().as_secs_f64() * 1000.0, "chat completion");
    resp
}

async fn healthz() -> &'static str {
    "ok"
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route(COMPLETIONS_PATH, post(completions))
        .route("/healthz", get(healthz))
        .with_state(gateway)
}

/// Serve on an already bound listener until `shutdown` resolves, then drain
/// in-flight requests.
pub async fn serve_with_shutdown(
    gateway: Arc<Gateway>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), GatewayError> {
    let ttl = gateway.config.session_ttl();
    let store = gateway.engine.store().clone();
    let sweeper = tokio::spawn(async move {
        let mut tick = tokio::time::interval((ttl / 4).clamp(Duration::from_secs(1), Duration::from_secs(60)));
        loop {
            tick.tick().await;
            let evicted = store.evict_expired(std::time::Instant::now(), ttl);
            if evicted > 0 {
                info!(evicted, "expired sessions evicted");
            }
        }
    });
    let app = router(gateway).into_make_service_with_connect_info::<SocketAddr>();
    let result = axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(GatewayError::Serve);
    sweeper.abort();
    result
}

pub async fn bind(addr: &str) -> Result<tokio::net::TcpListener, GatewayError> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| GatewayError::Bind {
            addr: addr.to_string(),
            source,
        })
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    info!("shutdown signal received, draining");
}
