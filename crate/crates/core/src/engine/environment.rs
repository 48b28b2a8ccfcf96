use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::upstream::ScriptFileError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvironmentError {
    #[error("script mismatch at call {call}: expected action {expected:?}, got {got:?}")]
    ScriptMismatch {
        call: usize,
        expected: String,
        got: String,
    },
    #[error("environment script exhausted after {0} calls")]
    ScriptExhausted(usize),
    #[error("tool failed: {0}")]
    ToolFailure(String),
}

/// A tool invocation about to be executed, with the thought it was
/// generated from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub step: usize,
    pub action: String,
    pub action_input: String,
    pub thought: String,
}

pub trait ToolEnvironment: Send {
    fn execute(&mut self, call: &ToolCall) -> Result<String, EnvironmentError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvEntry {
    pub action: String,
    pub observation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvScript {
    #[serde(default = "crate::schema_version")]
    pub schema_version: u32,
    pub entries: Vec<EnvEntry>,
}

impl EnvScript {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScriptFileError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Table-driven environment: the n-th call must name the n-th scripted
/// action and receives the scripted observation. Every call is logged,
/// including the one that fails.
#[derive(Debug, Clone)]
pub struct ScriptedEnvironment {
    entries: Vec<EnvEntry>,
    log: Vec<ToolCall>,
}

impl ScriptedEnvironment {
    pub fn new(script: EnvScript) -> Self {
        Self {
            entries: script.entries,
            log: Vec::new(),
        }
    }

    pub fn from_pairs<I, A, O>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, O)>,
        A: Into<String>,
        O: Into<String>,
    {
        Self {
            entries: pairs
                .into_iter()
                .map(|(a, o)| EnvEntry {
                    action: a.into(),
                    observation: o.into(),
                })
                .collect(),
            log: Vec::new(),
        }
    }

    pub fn call_log(&self) -> &[ToolCall] {
        &self.log
    }

    pub fn remaining(&self) -> usize {
        self.entries.len().saturating_sub(self.log.len())
    }
}

impl ToolEnvironment for ScriptedEnvironment {
    fn execute(&mut self, call: &ToolCall) -> Result<String, EnvironmentError> {
        let n = self.log.len();
        self.log.push(call.clone());
        let entry = self
            .entries
            .get(n)
            .ok_or(EnvironmentError::ScriptExhausted(n))?;
        if entry.action != call.action {
            return Err(EnvironmentError::ScriptMismatch {
                call: n,
                expected: entry.action.clone(),
                got: call.action.clone(),
            });
        }
        Ok(entry.observation.clone())
    }
}
