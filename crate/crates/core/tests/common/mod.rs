#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use aligner_gate::engine::{CorrectionBackend, REGENERATION_CUE};
use aligner_gate::gateway::wire::completion_body;
use aligner_gate::gateway::{self, Gateway, GatewayConfig, HttpTransport};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use serde_json::{json, Value};

pub mod loops;

pub const SYSTEM: &str = "Answer with\nThought: ...\nAction: ...\nAction Input: ...\nor Thought: ... then Final Answer: ...";

#[derive(Clone)]
pub enum Reply {
    Content(String),
    Raw {
        status: u16,
        content_type: &'static str,
        body: Vec<u8>,
    },
    Sse(Vec<String>),
    Slow(Duration, Box<Reply>),
}

impl Reply {
    pub fn content(s: impl Into<String>) -> Self {
        Reply::Content(s.into())
    }
}

type Handler = dyn Fn(&Value) -> Reply + Send + Sync;

#[derive(Clone)]
struct MockState {
    handler: Arc<Handler>,
    log: Arc<Mutex<Vec<(HeaderMap, Bytes)>>>,
}

pub struct MockUpstream {
    pub addr: SocketAddr,
    log: Arc<Mutex<Vec<(HeaderMap, Bytes)>>>,
}

impl MockUpstream {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Raw bodies received so far.
    pub fn bodies(&self) -> Vec<Bytes> {
        self.log.lock().unwrap().iter().map(|(_, b)| b.clone()).collect()
    }

    pub fn headers(&self) -> Vec<HeaderMap> {
        self.log.lock().unwrap().iter().map(|(h, _)| h.clone()).collect()
    }

    pub fn requests(&self) -> Vec<Value> {
        self.bodies()
            .iter()
            .map(|b| serde_json::from_slice(b).unwrap())
            .collect()
    }
}

fn respond(reply: Reply) -> std::pin::Pin<Box<dyn std::future::Future<Output = Response> + Send>> {
    Box::pin(async move {
        match reply {
            Reply::Content(c) => (
                [("content-type", "application/json")],
                completion_body("mock-model", &c),
            )
                .into_response(),
            Reply::Raw {
                status,
                content_type,
                body,
            } => (StatusCode::from_u16(status).unwrap(), [("content-type", content_type)], body).into_response(),
            Reply::Sse(deltas) => {
                let mut out = String::new();
                for d in deltas {
                    let chunk = json!({"id": "chatcmpl-s", "object": "chat.completion.chunk", "model": "mock-model",
                        "choices": [{"index": 0, "delta": {"content": d}, "finish_reason": null}]});
                    out.push_str(&format!("data: {chunk}\n\n"));
                }
                out.push_str("data: [DONE]\n\n");
                ([("content-type", "text/event-stream")], out).into_response()
            }
            Reply::Slow(d, inner) => {
                tokio::time::sleep(d).await;
                respond(*inner).await
            }
        }
    })
}

async fn mock_handler(State(state): State<MockState>, headers: HeaderMap, body: Bytes) -> Response {
    state.log.lock().unwrap().push((headers, body.clone()));
    let value: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let reply = (state.handler)(&value);
    respond(reply).await
}

pub async fn spawn_upstream(handler: impl Fn(&Value) -> Reply + Send + Sync + 'static) -> MockUpstream {
    let log = Arc::new(Mutex::new(Vec::new()));
    let state = MockState {
        handler: Arc::new(handler),
        log: log.clone(),
    };
    let app = Router::new()
        .route("/v1/chat/completions", post(mock_handler))
        .with_state(state);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    MockUpstream { addr, log }
}

pub fn last_content(req: &Value) -> String {
    req["messages"]
        .as_array()
        .and_then(|m| m.last())
        .and_then(|m| m["content"].as_str())
        .unwrap_or("")
        .to_string()
}

pub fn is_regeneration(req: &Value) -> bool {
    last_content(req) == REGENERATION_CUE
}

pub struct RunningGateway {
    pub addr: SocketAddr,
    pub gateway: Arc<Gateway>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    pub task: Option<tokio::task::JoinHandle<Result<(), gateway::GatewayError>>>,
}

impl RunningGateway {
    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub async fn shutdown(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.task.take().unwrap().await.unwrap().unwrap();
    }

    pub fn begin_shutdown(&mut self) {
        let _ = self.stop.take().unwrap().send(());
    }
}

pub async fn spawn_gateway(config: GatewayConfig, backend: Arc<dyn CorrectionBackend>) -> RunningGateway {
    let transport = Arc::new(HttpTransport::new(&config.upstream_base_url));
    let gw = Arc::new(Gateway::new(config, backend, transport).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let task = tokio::spawn(gateway::serve_with_shutdown(gw.clone(), listener, async {
        let _ = rx.await;
    }));
    RunningGateway {
        addr,
        gateway: gw,
        stop: Some(tx),
        task: Some(task),
    }
}

pub fn config_for(upstream: &MockUpstream) -> GatewayConfig {
    GatewayConfig {
        upstream_base_url: upstream.url(),
        backend: "identity".into(),
        ..GatewayConfig::default()
    }
}

pub struct HttpReply {
    pub status: u16,
    pub headers: reqwest::header::HeaderMap,
    pub body: Vec<u8>,
}

impl HttpReply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }

    pub fn content(&self) -> String {
        self.json()["choices"][0]["message"]["content"].as_str().unwrap().to_string()
    }

    pub fn header(&self, name: &str) -> Option<String> {
        self.headers.get(name).map(|v| v.to_str().unwrap().to_string())
    }
}

pub async fn post_raw(url: &str, session: Option<&str>, body: impl Into<Vec<u8>>) -> HttpReply {
    let mut req = reqwest::Client::new()
        .post(url)
        .header("content-type", "application/json")
        .body(body.into());
    if let Some(s) = session {
        req = req.header("X-Aligner-Session", s);
    }
    let resp = req.send().await.unwrap();
    HttpReply {
        status: resp.status().as_u16(),
        headers: resp.headers().clone(),
        body: resp.bytes().await.unwrap().to_vec(),
    }
}

pub async fn post_messages(url: &str, session: Option<&str>, messages: Value) -> HttpReply {
    post_raw(url, session, json!({"model": "mock-model", "messages": messages}).to_string()).await
}

pub fn agent_messages(instruction: &str) -> Value {
    json!([
        {"role": "system", "content": SYSTEM},
        {"role": "user", "content": instruction}
    ])
}
