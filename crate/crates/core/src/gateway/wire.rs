//! Chat-completion wire schema as spoken by agent frameworks.
//!
//! Only the fields the gateway reads are typed; everything else is carried
//! in `extra` so it survives a parse/serialize cycle.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::chat::{ChatMessage, Role};

#[derive(Debug, Error)]
pub enum WireError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("request has no messages")]
    NoMessages,
    #[error("response has no choices[0].message.content string")]
    NoContent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: Role,
    #[serde(default)]
    pub content: Option<Value>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl WireMessage {
    /// Text content; array-of-parts content is flattened to its text parts.
    pub fn text(&self) -> String {
        match &self.content {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Array(parts)) => parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join("\n"),
            _ => String::new(),
        }
    }

    pub fn to_chat(&self) -> ChatMessage {
        ChatMessage::new(self.role, self.text())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<WireMessage>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ChatRequest {
    pub fn parse(body: &[u8]) -> Result<Self, WireError> {
        let req: ChatRequest = serde_json::from_slice(body)?;
        if req.messages.is_empty() {
            return Err(WireError::NoMessages);
        }
        Ok(req)
    }

    pub fn is_streaming(&self) -> bool {
        self.extra.get("stream").and_then(Value::as_bool).unwrap_or(false)
    }

    pub fn chat_messages(&self) -> Vec<ChatMessage> {
        self.messages.iter().map(WireMessage::to_chat).collect()
    }

    pub fn first_user_text(&self) -> Option<String> {
        self.messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(WireMessage::text)
    }

    /// A non-streaming request with the same model and sampling settings but
    /// different messages.
    pub fn with_messages(&self, messages: &[ChatMessage]) -> Value {
        let mut body = Map::new();
        body.insert("model".into(), Value::String(self.model.clone()));
        body.insert(
            "messages".into(),
            serde_json::to_value(messages).expect("messages serialize"),
        );
        for (k, v) in &self.extra {
            if k != "stream" && k != "stream_options" {
                body.insert(k.clone(), v.clone());
            }
        }
        body.insert("stream".into(), Value::Bool(false));
        Value::Object(body)
    }
}

/// `choices[0].message.content` of a non-streaming completion.
pub fn completion_content(body: &[u8]) -> Result<String, WireError> {
    let v: Value = serde_json::from_slice(body)?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or(WireError::NoContent)
}

/// Replace `choices[0].message.content`, leaving every other field as it was.
pub fn splice_content(body: &[u8], content: &str) -> Result<Vec<u8>, WireError> {
    let mut v: Value = serde_json::from_slice(body)?;
    let slot = v
        .pointer_mut("/choices/0/message/content")
        .ok_or(WireError::NoContent)?;
    *slot = Value::String(content.to_string());
    Ok(serde_json::to_vec(&v)?)
}

/// Minimal completion body, used by mocks and tests.
pub fn completion_body(model: &str, content: &str) -> Vec<u8> {
    serde_json::to_vec(&serde_json::json!({
        "id": "chatcmpl-local",
        "object": "chat.completion",
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }]
    }))
    .expect("static json")
}
