use serde::{Deserialize, Serialize};

use super::wire::ChatRequest;
use crate::chat::Role;
use crate::trajectory::react::GRAMMAR_MARKERS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    AgentStep,
    Passthrough,
}

/// Decides whether a request is a ReAct agent step by looking for the
/// scaffolding markers in its system and user messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classifier {
    markers: Vec<String>,
    min_markers: usize,
}

impl Default for Classifier {
    fn default() -> Self {
        Self::new(GRAMMAR_MARKERS.iter().map(|m| m.to_string()).collect(), 2)
    }
}

impl Classifier {
    /// A request is an agent step when at least `min_markers` distinct
    /// markers appear (capped at the number of markers configured).
    pub fn new(markers: Vec<String>, min_markers: usize) -> Self {
        let min_markers = min_markers.clamp(1, markers.len().max(1));
        Self {
            markers,
            min_markers,
        }
    }

    pub fn classify(&self, req: &ChatRequest) -> RequestKind {
        if self.markers.is_empty() {
            return RequestKind::Passthrough;
        }
        let scaffold: Vec<String> = req
            .messages
            .iter()
            .filter(|m| matches!(m.role, Role::System | Role::User))
            .map(|m| m.text())
            .collect();
        let present = self
            .markers
            .iter()
            .filter(|marker| scaffold.iter().any(|text| text.contains(marker.as_str())))
            .count();
        if present >= self.min_markers {
            RequestKind::AgentStep
        } else {
            RequestKind::Passthrough
        }
    }
}
