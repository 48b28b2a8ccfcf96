//! Server-sent-event buffering.
//!
//! A thought cannot be corrected until it is complete, so a streamed
//! upstream reply is read to the end, its content deltas joined, and after
//! alignment the result is re-emitted to the client as a short stream.

use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SseError {
    #[error("stream is not valid UTF-8")]
    Utf8,
    #[error("stream chunk is not valid JSON: {0}")]
    Json(String),
    #[error("stream ended without any completion chunk")]
    Empty,
}

pub fn is_event_stream(content_type: Option<&str>) -> bool {
    content_type.is_some_and(|ct| ct.trim_start().starts_with("text/event-stream"))
}

/// A fully buffered streamed completion.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferedStream {
    pub content: String,
    /// `id`, `model`, `created`, `object` and the like from the first chunk.
    pub envelope: Map<String, Value>,
}

pub fn buffer_sse(body: &[u8]) -> Result<BufferedStream, SseError> {
    let text = std::str::from_utf8(body).map_err(|_| SseError::Utf8)?;
    let mut content = String::new();
    let mut envelope: Option<Map<String, Value>> = None;
    // Events are separated by blank lines; data lines within one event are
    // joined with newlines.
    for event in text.split("\n\n").flat_map(|e| e.split("\r\n\r\n")) {
        let data: Vec<&str> = event
            .lines()
            .filter_map(|l| l.strip_prefix("data:"))
            .map(|d| d.strip_prefix(' ').unwrap_or(d))
            .collect();
        if data.is_empty() {
            continue;
        }
        let payload = data.join("\n");
        if payload.trim() == "[DONE]" {
            break;
        }
        let chunk: Value =
            serde_json::from_str(&payload).map_err(|e| SseError::Json(e.to_string()))?;
        if envelope.is_none() {
            if let Value::Object(map) = &chunk {
                let mut env = map.clone();
                env.remove("choices");
                env.remove("usage");
                envelope = Some(env);
            }
        }
        if let Some(delta) = chunk
            .pointer("/choices/0/delta/content")
            .and_then(Value::as_str)
        {
            content.push_str(delta);
        }
    }
    Ok(BufferedStream {
        content,
        envelope: envelope.ok_or(SseError::Empty)?,
    })
}

/// Emit `content` as a two-chunk stream followed by the `[DONE]` sentinel.
pub fn render_sse(envelope: &Map<String, Value>, content: &str) -> Vec<u8> {
    let chunk = |choice: Value| {
        let mut m = envelope.clone();
        m.insert("choices".into(), json!([choice]));
        Value::Object(m)
    };
    let first = chunk(json!({
        "index": 0,
        "delta": {"role": "assistant", "content": content},
        "finish_reason": null
    }));
    let last = chunk(json!({"index": 0, "delta": {}, "finish_reason": "stop"}));
    let mut out = Vec::new();
    for c in [first, last] {
        out.extend_from_slice(b"data: ");
        out.extend_from_slice(&serde_json::to_vec(&c).expect("chunk serializes"));
        out.extend_from_slice(b"\n\n");
    }
    out.extend_from_slice(b"data: [DONE]\n\n");
    out
}
