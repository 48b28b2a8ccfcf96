//! Correction backends: anything that maps a tagged context to a corrected
//! thought.

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::ChatMessage;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("correction backend unavailable: {0}")]
    Unavailable(String),
    #[error("correction backend exceeded its deadline")]
    Timeout,
    #[error("correction backend returned an empty thought")]
    EmptyResponse,
    #[error("correction backend returned an unusable response: {0}")]
    BadResponse(String),
}

/// One correction call.
///
/// `prompt` is the serialized tagged context and is all a model-backed
/// backend needs. The candidate thought is carried separately so rule-based
/// and identity backends do not have to parse the prompt back apart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub prompt: String,
    pub candidate: String,
}

#[async_trait]
pub trait CorrectionBackend: Send + Sync {
    fn name(&self) -> &str;

    async fn correct(
        &self,
        request: &CorrectionRequest,
        deadline: Duration,
    ) -> Result<String, BackendError>;
}

#[async_trait]
impl<T: CorrectionBackend + ?Sized> CorrectionBackend for Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    async fn correct(
        &self,
        request: &CorrectionRequest,
        deadline: Duration,
    ) -> Result<String, BackendError> {
        (**self).correct(request, deadline).await
    }
}

/// Returns every candidate unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityBackend;

#[async_trait]
impl CorrectionBackend for IdentityBackend {
    fn name(&self) -> &str {
        "identity"
    }

    async fn correct(&self, request: &CorrectionRequest, _: Duration) -> Result<String, BackendError> {
        Ok(request.candidate.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rewrite {
    /// Append text after the thought, separated by one space.
    Append(String),
    /// Substitute the matched trigger phrase.
    ReplacePhrase(String),
    /// Replace the whole thought.
    Replace(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    /// Case-insensitive substring that selects the rule.
    pub trigger: String,
    pub rewrite: Rewrite,
}

impl Rule {
    fn apply(&self, thought: &str) -> Option<String> {
        let lower = thought.to_lowercase();
        let needle = self.trigger.to_lowercase();
        let at = lower.find(&needle)?;
        Some(match &self.rewrite {
            Rewrite::Append(text) => format!("{} {}", thought.trim_end(), text),
            Rewrite::Replace(text) => text.clone(),
            Rewrite::ReplacePhrase(text) => {
                // Lowercasing can shift byte offsets for some scripts; fall
                // back to replacing the trigger as written.
                if lower.len() == thought.len() {
                    format!("{}{}{}", &thought[..at], text, &thought[at + needle.len()..])
                } else {
                    thought.replacen(&self.trigger, text, 1)
                }
            }
        })
    }
}

#[derive(Debug, Error)]
pub enum RuleFileError {
    #[error("reading rule file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing rule file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Deterministic stand-in for a trained aligner: the first rule whose
/// trigger occurs in the candidate rewrites it; otherwise the candidate is
/// returned untouched.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RuleBackend {
    pub rules: Vec<Rule>,
}

impl RuleBackend {
    pub fn new(rules: Vec<Rule>) -> Self {
        Self { rules }
    }

    /// Rule file: `{"rules": [{"trigger": "...", "rewrite": {"append": "..."}}]}`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, RuleFileError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn rewrite(&self, thought: &str) -> String {
        self.rules
            .iter()
            .find_map(|r| r.apply(thought))
            .unwrap_or_else(|| thought.to_string())
    }
}

#[async_trait]
impl CorrectionBackend for RuleBackend {
    fn name(&self) -> &str {
        "rule"
    }

    async fn correct(&self, request: &CorrectionRequest, _: Duration) -> Result<String, BackendError> {
        Ok(self.rewrite(&request.candidate))
    }
}

/// Aligner model served behind a chat-completion endpoint. The tagged
/// context is sent as a single user message and the reply content is the
/// corrected thought.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    client: reqwest::Client,
    endpoint: String,
    model: String,
}

impl RemoteBackend {
    pub fn new(base_url: &str, model: impl Into<String>) -> Self {
        Self {
            client: reqwest::Client::new(),
            endpoint: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
            model: model.into(),
        }
    }
}

#[async_trait]
impl CorrectionBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    async fn correct(
        &self,
        request: &CorrectionRequest,
        deadline: Duration,
    ) -> Result<String, BackendError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [ChatMessage::user(request.prompt.clone())],
            "temperature": 0,
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
                    BackendError::Timeout
                } else {
                    BackendError::Unavailable(e.to_string())
                }
            })?;
        let status = response.status();
        let bytes = response
            .bytes()
            .await
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Unavailable(format!("status {status}")));
        }
        crate::gateway::wire::completion_content(&bytes)
            .map_err(|e| BackendError::BadResponse(e.to_string()))
    }
}

/// Wraps a backend and keeps every request it sees.
pub struct RecordingBackend<B> {
    inner: B,
    seen: Mutex<Vec<CorrectionRequest>>,
}

impl<B> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<CorrectionRequest> {
        self.seen.lock().unwrap().clone()
    }
}

#[async_trait]
impl<B: CorrectionBackend> CorrectionBackend for RecordingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    async fn correct(
        &self,
        request: &CorrectionRequest,
        deadline: Duration,
    ) -> Result<String, BackendError> {
        self.seen.lock().unwrap().push(request.clone());
        self.inner.correct(request, deadline).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(c: &str) -> CorrectionRequest {
        CorrectionRequest {
            prompt: format!("task\n{c}"),
            candidate: c.into(),
        }
    }

    fn confirm_rule() -> Rule {
        Rule {
            trigger: "without confirmation".into(),
            rewrite: Rewrite::Append("after obtaining explicit user confirmation".into()),
        }
    }

    #[tokio::test]
    async fn identity_echoes() {
        let out = IdentityBackend
            .correct(&req("check the file"), Duration::from_secs(1))
            .await
            .unwrap();
        assert_eq!(out, "check the file");
    }

    #[tokio::test]
    async fn rule_appends_on_trigger() {
        let b = RuleBackend::new(vec![confirm_rule()]);
        let out = b
            .correct(&req("I will transfer the funds without confirmation."), Duration::from_secs(1))
            .await
            .unwrap();
        assert_eq!(
            out,
            "I will transfer the funds without confirmation. after obtaining explicit user confirmation"
        );
        let untouched = b.correct(&req("Read the file."), Duration::from_secs(1)).await.unwrap();
        assert_eq!(untouched, "Read the file.");
    }

    #[test]
    fn rule_variants() {
        let phrase = Rule {
            trigger: "Delete the folder directly".into(),
            rewrite: Rewrite::ReplacePhrase("list the folder and ask before deleting".into()),
        };
        assert_eq!(
            phrase.apply("I should delete the folder directly.").unwrap(),
            "I should list the folder and ask before deleting."
        );
        let whole = Rule {
            trigger: "rm -rf".into(),
            rewrite: Rewrite::Replace("I must not run destructive commands.".into()),
        };
        assert_eq!(
            whole.apply("run rm -rf /").unwrap(),
            "I must not run destructive commands."
        );
        assert!(whole.apply("ls").is_none());
    }

    #[test]
    fn rule_file_format() {
        let json = r#"{"rules":[{"trigger":"without confirmation","rewrite":{"append":"after obtaining explicit user confirmation"}}]}"#;
        let b: RuleBackend = serde_json::from_str(json).unwrap();
        assert_eq!(b.rules, vec![confirm_rule()]);
    }
}
