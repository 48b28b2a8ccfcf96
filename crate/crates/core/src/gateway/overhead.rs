//! Latency the gateway itself adds to an agent step.
//!
//! Requests run through [`Gateway::handle`] against an in-process upstream
//! and correction backend that answer immediately. Time spent inside those
//! mocks is measured separately and subtracted, leaving parsing, session
//! bookkeeping, context serialization, regeneration plumbing and response
//! splicing.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use axum::http::{HeaderMap, HeaderValue};
use bytes::Bytes;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{wire, Gateway, GatewayConfig, UpstreamReply, UpstreamTransport};
use crate::engine::{
    BackendError, CorrectionBackend, CorrectionRequest, Rewrite, Rule, RuleBackend, UpstreamError,
    REGENERATION_CUE,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OverheadError {
    #[error("at least one request is needed")]
    EmptySample,
    #[error("gateway setup failed: {0}")]
    Setup(String),
    #[error("request {index} failed with status {status}")]
    RequestFailed { index: usize, status: u16 },
}

/// Gateway-added time per request, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub n: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
}

impl LatencyReport {
    /// Nearest-rank percentiles over `samples`.
    pub fn from_samples(samples: &[Duration]) -> Result<Self, OverheadError> {
        if samples.is_empty() {
            return Err(OverheadError::EmptySample);
        }
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1000.0).collect();
        ms.sort_by(f64::total_cmp);
        let rank = |p: f64| {
            let r = (p * ms.len() as f64).ceil() as usize;
            ms[r.clamp(1, ms.len()) - 1]
        };
        Ok(Self {
            n: ms.len(),
            p50_ms: rank(0.50),
            p95_ms: rank(0.95),
            max_ms: *ms.last().unwrap(),
            mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
        })
    }
}

#[derive(Default)]
struct MockClock(AtomicU64);

impl MockClock {
    fn add(&self, d: Duration) {
        self.0.fetch_add(d.as_nanos() as u64, Ordering::Relaxed);
    }

    fn take(&self) -> Duration {
        Duration::from_nanos(self.0.swap(0, Ordering::Relaxed))
    }
}

struct InstantUpstream {
    clock: Arc<MockClock>,
}

#[async_trait]
impl UpstreamTransport for InstantUpstream {
    async fn send(&self, body: Bytes, _: &HeaderMap, _: Duration) -> Result<UpstreamReply, UpstreamError> {
        let started = Instant::now();
        let regenerate = body
            .windows(REGENERATION_CUE.len())
            .any(|w| w == REGENERATION_CUE.as_bytes());
        let content = if regenerate {
            "Action: AskUser\nAction Input: {\"question\":\"Shall I proceed?\"}"
        } else if body.windows(7).any(|w| w == b"risky-1") {
            "Thought: I will transfer the money without confirmation.\nAction: Transfer\nAction Input: {\"amount\":100}"
        } else {
            "Thought: I should look up the balance first.\nAction: GetBalance\nAction Input: {}"
        };
        let reply = UpstreamReply {
            status: 200,
            content_type: Some("application/json".into()),
            body: Bytes::from(wire::completion_body("mock", content)),
        };
        self.clock.add(started.elapsed());
        Ok(reply)
    }
}

struct TimedBackend {
    inner: RuleBackend,
    clock: Arc<MockClock>,
}

#[async_trait]
impl CorrectionBackend for TimedBackend {
    fn name(&self) -> &str {
        "timed-rule"
    }

    async fn correct(&self, r: &CorrectionRequest, d: Duration) -> Result<String, BackendError> {
        let started = Instant::now();
        let out = self.inner.correct(r, d).await;
        self.clock.add(started.elapsed());
        out
    }
}

const SYSTEM_PROMPT: &str = "Answer using Thought:, Action:, Action Input: lines, or Thought: then Final Answer:.";

fn request_body(i: usize) -> Bytes {
    // Every other request carries a history step and a risky marker so the
    // correction and regeneration paths are both exercised.
    let risky = i % 2 == 1;
    let mut messages = vec![
        serde_json::json!({"role": "system", "content": SYSTEM_PROMPT}),
        serde_json::json!({"role": "user", "content": format!("Pay the invoice for account {i}")}),
    ];
    if risky {
        messages.push(serde_json::json!({"role": "assistant", "content": "Thought: risky-1 check the invoice.\nAction: GetInvoice\nAction Input: {}"}));
        messages.push(serde_json::json!({"role": "user", "content": "Observation: invoice total is $100"}));
    }
    Bytes::from(
        serde_json::to_vec(&serde_json::json!({"model": "mock", "messages": messages}))
            .expect("static json"),
    )
}

/// Time `n_requests` agent-step requests through the gateway and report the
/// overhead distribution.
pub async fn measure_overhead(n_requests: usize) -> Result<LatencyReport, OverheadError> {
    if n_requests == 0 {
        return Err(OverheadError::EmptySample);
    }
    let clock = Arc::new(MockClock::default());
    let config = GatewayConfig {
        backend: "identity".into(),
        ..GatewayConfig::default()
    };
    let backend = Arc::new(TimedBackend {
        inner: RuleBackend::new(vec![Rule {
            trigger: "without confirmation".into(),
            rewrite: Rewrite::Append("only after obtaining explicit user confirmation".into()),
        }]),
        clock: clock.clone(),
    });
    let transport = Arc::new(InstantUpstream {
        clock: clock.clone(),
    });
    let gateway = Gateway::new(config, backend, transport)
        .map_err(|e| OverheadError::Setup(e.to_string()))?;

    let mut samples = Vec::with_capacity(n_requests);
    for i in 0..n_requests {
        let mut headers = HeaderMap::new();
        headers.insert(
            "x-aligner-session",
            HeaderValue::from_str(&format!("overhead-{i}")).expect("ascii"),
        );
        let body = request_body(i);
        clock.take();
        let started = Instant::now();
        let resp = gateway.handle(&headers, "127.0.0.1", body).await;
        let total = started.elapsed();
        let mock = clock.take();
        if !resp.status.is_success() {
            return Err(OverheadError::RequestFailed {
                index: i,
                status: resp.status.as_u16(),
            });
        }
        samples.push(total.saturating_sub(mock));
    }
    LatencyReport::from_samples(&samples)
}
