//! Run the gateway in front of a toy model and watch it rewrite a step.
//!
//! A stand-in upstream on a local port plays the agent's model. The gateway
//! listens on another port with a rule backend and an audit log; requests
//! go to the gateway exactly as an agent framework would send them.
//!
//! ```not_rust
//! cargo run -p aligner-gate --example gateway_sidecar
//! ```

use std::net::SocketAddr;
use std::sync::Arc;

use aligner_gate::engine::{Rewrite, Rule, RuleBackend, REGENERATION_CUE};
use aligner_gate::gateway::audit::read_audit_log;
use aligner_gate::gateway::wire::completion_body;
use aligner_gate::gateway::{self, Gateway, GatewayConfig, HttpTransport};
use axum::routing::post;
use axum::Router;
use serde_json::{json, Value};

const SYSTEM: &str = "Use the format:\nThought: ...\nAction: ...\nAction Input: ...\nor Thought: ... then Final Answer: ...";

// The toy model: a risky first step, an action for any corrected thought,
// and a final answer once it has seen an observation.
async fn toy_model(body: axum::body::Bytes) -> impl axum::response::IntoResponse {
    let req: Value = serde_json::from_slice(&body).unwrap();
    let messages = req["messages"].as_array().cloned().unwrap_or_default();
    let last = messages.last().and_then(|m| m["content"].as_str()).unwrap_or("");
    let content = if req["messages"][0]["content"] == "ping" {
        "pong".to_string()
    } else if last == REGENERATION_CUE {
        "Action: SendEmail\nAction Input: {\"to\": \"manager@corp.example\", \"file\": \"q3.xlsx\"}".into()
    } else if last.starts_with("Observation:") {
        "Thought: The report is with my manager.\nFinal Answer: Sent the Q3 report to your manager.".into()
    } else {
        "Thought: I will send the report to all staff so everyone has it.\nAction: SendEmail\nAction Input: {\"to\": \"all@corp.example\", \"file\": \"q3.xlsx\"}".into()
    };
    (
        [("content-type", "application/json")],
        completion_body("toy", &content),
    )
}

async fn spawn(router: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router.into_make_service_with_connect_info::<SocketAddr>())
            .await
            .unwrap()
    });
    addr
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let upstream = spawn(Router::new().route("/v1/chat/completions", post(toy_model))).await;
    let dir = tempfile::tempdir()?;
    let audit_path = dir.path().join("audit.jsonl");

    let config = GatewayConfig {
        upstream_base_url: format!("http://{upstream}"),
        backend: "identity".into(),
        audit_log_path: Some(audit_path.clone()),
        ..GatewayConfig::default()
    };
    let rules = RuleBackend::new(vec![Rule {
        trigger: "all staff".into(),
        rewrite: Rewrite::Replace("The report is confidential, so I should send it only to my manager.".into()),
    }]);
    let gw = Arc::new(Gateway::new(
        config.clone(),
        Arc::new(rules),
        Arc::new(HttpTransport::new(&config.upstream_base_url)),
    )?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let gw_addr = listener.local_addr()?;
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(gateway::serve_with_shutdown(gw, listener, async {
        let _ = stopped.await;
    }));

    let client = reqwest::Client::new();
    let url = format!("http://{gw_addr}/v1/chat/completions");
    let post = |messages: Value| {
        client
            .post(&url)
            .header("X-Aligner-Session", "demo-run")
            .header("content-type", "application/json")
            .body(json!({"model": "toy", "messages": messages}).to_string())
            .send()
    };

    // Not an agent step: forwarded untouched.
    let plain = post(json!([{"role": "user", "content": "ping"}])).await?;
    println!("passthrough: {}", plain.text().await?);

    let mut messages = json!([
        {"role": "system", "content": SYSTEM},
        {"role": "user", "content": "Send the Q3 report to my manager."}
    ]);
    let first = post(messages.clone()).await?;
    println!(
        "\nstep 0 policy={} changed={}",
        first.headers()["x-aligner-policy"].to_str()?,
        first.headers()["x-aligner-changed"].to_str()?
    );
    let body: Value = serde_json::from_slice(&first.bytes().await?)?;
    let step = body["choices"][0]["message"]["content"].as_str().unwrap().to_string();
    println!("{step}");

    // The agent runs the (aligned) action and reports back.
    let arr = messages.as_array_mut().unwrap();
    arr.push(json!({"role": "assistant", "content": step}));
    arr.push(json!({"role": "user", "content": "Observation: Email sent to manager@corp.example"}));
    let second: Value = serde_json::from_slice(&post(messages).await?.bytes().await?)?;
    println!("\nstep 1:\n{}", second["choices"][0]["message"]["content"].as_str().unwrap());

    let health = client.get(format!("http://{gw_addr}/healthz")).send().await?;
    println!("\n/healthz -> {}", health.status());

    let _ = stop.send(());
    server.await??;

    println!("\naudit log:");
    for r in read_audit_log(&audit_path)? {
        println!("  step {} {:?} changed={} : {:?} -> {:?}", r.step, r.policy, r.changed, r.original, r.aligned);
    }
    Ok(())
}
