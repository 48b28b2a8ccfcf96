//! The agent's own model, reached through a chat interface.

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::ChatMessage;
use crate::trajectory::react::{ACTION, FINAL_ANSWER};

/// Sent as the last user message when the upstream is asked to act on an
/// aligned thought that has been placed in its context.
pub const REGENERATION_CUE: &str = "Continue from the thought above. Reply with the next Action and Action Input, or with a Final Answer.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UpstreamError {
    #[error("upstream unreachable: {0}")]
    Unreachable(String),
    #[error("upstream exceeded its deadline")]
    Timeout,
    #[error("upstream returned status {0}")]
    Status(u16),
    #[error("upstream returned an unusable response: {0}")]
    BadResponse(String),
    #[error("scripted agent has no reply left for call {0}")]
    ScriptExhausted(usize),
}

#[async_trait]
pub trait UpstreamModel: Send + Sync {
    async fn complete(
        &self,
        messages: &[ChatMessage],
        deadline: Duration,
    ) -> Result<String, UpstreamError>;
}

#[async_trait]
impl<T: UpstreamModel + ?Sized> UpstreamModel for Arc<T> {
    async fn complete(
        &self,
        messages: &[ChatMessage],
        deadline: Duration,
    ) -> Result<String, UpstreamError> {
        (**self).complete(messages, deadline).await
    }
}

/// Chat-completion endpoint speaking the common `/v1/chat/completions` schema.
#[derive(Debug, Clone)]
pub struct HttpUpstream {
    client: reqwest::Client,
    endpoint: String,
    model: String,
}

impl HttpUpstream {
    pub fn new(base_url: &str, model: impl Into<String>) -> Self {
        Self {
            client: reqwest::Client::new(),
            endpoint: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
            model: model.into(),
        }
    }
}

#[async_trait]
impl UpstreamModel for HttpUpstream {
    async fn complete(
        &self,
        messages: &[ChatMessage],
        deadline: Duration,
    ) -> Result<String, UpstreamError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": messages,
            "stream": false,
        });
        let response = self
            .client
            .post(&self.endpoint)
            .timeout(deadline)
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() {
                    UpstreamError::Timeout
                } else {
                    UpstreamError::Unreachable(e.to_string())
                }
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(UpstreamError::Status(status.as_u16()));
        }
        let bytes = response
            .bytes()
            .await
            .map_err(|e| UpstreamError::Unreachable(e.to_string()))?;
        crate::gateway::wire::completion_content(&bytes)
            .map_err(|e| UpstreamError::BadResponse(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedTurn {
    /// Full ReAct text the agent produces for this step.
    pub reply: String,
    /// Reply to give if asked to regenerate after a correction. Defaults to
    /// the action part of `reply`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regenerated: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentScript {
    #[serde(default = "crate::schema_version")]
    pub schema_version: u32,
    pub steps: Vec<ScriptedTurn>,
}

#[derive(Debug, Error)]
pub enum ScriptFileError {
    #[error("reading script: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing script: {0}")]
    Parse(#[from] serde_json::Error),
}

impl AgentScript {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScriptFileError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// One call the scripted agent received.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedCall {
    pub messages: Vec<ChatMessage>,
    pub regeneration: bool,
    pub reply: String,
}

#[derive(Debug, Default)]
struct ScriptCursor {
    next: usize,
    calls: Vec<RecordedCall>,
}

/// Replays a fixed script of agent outputs. A call whose last message is
/// [`REGENERATION_CUE`] is answered from the current turn's `regenerated`
/// field; any other call advances to the next turn.
#[derive(Debug)]
pub struct ScriptedAgent {
    script: AgentScript,
    cursor: Mutex<ScriptCursor>,
}

impl ScriptedAgent {
    pub fn new(script: AgentScript) -> Self {
        Self {
            script,
            cursor: Mutex::new(ScriptCursor::default()),
        }
    }

    pub fn from_replies<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(AgentScript {
            schema_version: crate::SCHEMA_VERSION,
            steps: replies
                .into_iter()
                .map(|r| ScriptedTurn {
                    reply: r.into(),
                    regenerated: None,
                })
                .collect(),
        })
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.cursor.lock().unwrap().calls.clone()
    }

    pub fn reset(&self) {
        *self.cursor.lock().unwrap() = ScriptCursor::default();
    }
}

/// Everything from the first `Action:` or `Final Answer:` line onwards.
fn action_part(reply: &str) -> String {
    let mut offset = 0;
    for line in reply.split_inclusive('\n') {
        if line.starts_with(ACTION) || line.starts_with(FINAL_ANSWER) {
            return reply[offset..].to_string();
        }
        offset += line.len();
    }
    reply.to_string()
}

#[async_trait]
impl UpstreamModel for ScriptedAgent {
    async fn complete(
        &self,
        messages: &[ChatMessage],
        _deadline: Duration,
    ) -> Result<String, UpstreamError> {
        let mut cursor = self.cursor.lock().unwrap();
        let regeneration = messages
            .last()
            .is_some_and(|m| m.content == REGENERATION_CUE);
        let reply = if regeneration {
            let turn = cursor
                .next
                .checked_sub(1)
                .and_then(|i| self.script.steps.get(i))
                .ok_or(UpstreamError::ScriptExhausted(cursor.calls.len()))?;
            turn.regenerated
                .clone()
                .unwrap_or_else(|| action_part(&turn.reply))
        } else {
            let turn = self
                .script
                .steps
                .get(cursor.next)
                .ok_or(UpstreamError::ScriptExhausted(cursor.calls.len()))?;
            cursor.next += 1;
            turn.reply.clone()
        };
        cursor.calls.push(RecordedCall {
            messages: messages.to_vec(),
            regeneration,
            reply: reply.clone(),
        });
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_part_strips_thought() {
        assert_eq!(
            action_part("Thought: a\nmore\nAction: B\nAction Input: {}"),
            "Action: B\nAction Input: {}"
        );
        assert_eq!(action_part("Thought: a\nFinal Answer: x"), "Final Answer: x");
    }

    #[tokio::test]
    async fn scripted_agent_turns_and_regeneration() {
        let agent = ScriptedAgent::new(AgentScript {
            schema_version: 1,
            steps: vec![
                ScriptedTurn {
                    reply: "Thought: a\nAction: A\nAction Input: {}".into(),
                    regenerated: Some("Action: Safe\nAction Input: {}".into()),
                },
                ScriptedTurn {
                    reply: "Thought: b\nFinal Answer: ok".into(),
                    regenerated: None,
                },
            ],
        });
        let d = Duration::from_secs(1);
        let first = agent.complete(&[ChatMessage::user("go")], d).await.unwrap();
        assert!(first.starts_with("Thought: a"));
        let regen = agent
            .complete(&[ChatMessage::user(REGENERATION_CUE)], d)
            .await
            .unwrap();
        assert_eq!(regen, "Action: Safe\nAction Input: {}");
        let second = agent.complete(&[ChatMessage::user("go")], d).await.unwrap();
        assert_eq!(second, "Thought: b\nFinal Answer: ok");
        let regen = agent
            .complete(&[ChatMessage::user(REGENERATION_CUE)], d)
            .await
            .unwrap();
        assert_eq!(regen, "Final Answer: ok");
        assert_eq!(
            agent.complete(&[ChatMessage::user("go")], d).await,
            Err(UpstreamError::ScriptExhausted(4))
        );
        assert_eq!(agent.calls().len(), 4);
    }
}
