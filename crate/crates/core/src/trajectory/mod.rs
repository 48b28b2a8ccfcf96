//! Trajectory model for ReAct-style agents.
//!
//! A run of an agent under one [`Instruction`] is a sequence of
//! thought / action / observation cycles. Read as a decision process, the
//! state at step `i` is the observation returned by the environment and the
//! agent's move is the pair (thought, action): the thought is produced first,
//! which is what makes it interceptable before any tool runs.
//!
//! This module holds the plain data types plus the three text surfaces built
//! on them: the ReAct line grammar ([`react`]), the tagged context handed to
//! the correction backend ([`context`]), and the normalized thought
//! comparison used to decide whether a correction changed anything
//! ([`equivalence`]).

pub mod context;
pub mod equivalence;
pub mod react;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use context::{serialize_aligner_context, AlignerContext, ContextError, EscapePolicy};
pub use equivalence::{normalize_thought, thoughts_equivalent};
pub use react::{parse_react_step, render_react_step, ParseError, ParsedStep};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrajectoryError {
    #[error("instruction text is empty")]
    EmptyInstruction,
    #[error("thought at step {0} is empty")]
    EmptyThought(usize),
    #[error("step indices must be consecutive from 0: expected {expected}, found {found}")]
    IndexGap { expected: usize, found: usize },
    #[error("step {0} lacks an observation but is not the last step")]
    MissingObservation(usize),
    #[error("final answer recorded while the last step is still awaiting its observation")]
    FinalBeforeObservation,
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
}

/// The ten instruction scenarios used to organise training instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "Privacy Risk")]
    Privacy,
    #[serde(rename = "Financial Risk")]
    Financial,
    #[serde(rename = "Operational Risk")]
    Operational,
    #[serde(rename = "Safety Risk")]
    Safety,
    #[serde(rename = "Reputation Risk")]
    Reputation,
    #[serde(rename = "Cybersecurity Risk")]
    Cybersecurity,
    #[serde(rename = "Legal & Regulatory Risk")]
    LegalRegulatory,
    #[serde(rename = "Data Integrity Risk")]
    DataIntegrity,
    #[serde(rename = "Ethical Risk")]
    Ethical,
    #[serde(rename = "Miscellaneous Risks")]
    Miscellaneous,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::Privacy,
        Scenario::Financial,
        Scenario::Operational,
        Scenario::Safety,
        Scenario::Reputation,
        Scenario::Cybersecurity,
        Scenario::LegalRegulatory,
        Scenario::DataIntegrity,
        Scenario::Ethical,
        Scenario::Miscellaneous,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Privacy => "Privacy Risk",
            Scenario::Financial => "Financial Risk",
            Scenario::Operational => "Operational Risk",
            Scenario::Safety => "Safety Risk",
            Scenario::Reputation => "Reputation Risk",
            Scenario::Cybersecurity => "Cybersecurity Risk",
            Scenario::LegalRegulatory => "Legal & Regulatory Risk",
            Scenario::DataIntegrity => "Data Integrity Risk",
            Scenario::Ethical => "Ethical Risk",
            Scenario::Miscellaneous => "Miscellaneous Risks",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = TrajectoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| TrajectoryError::UnknownScenario(s.to_string()))
    }
}

/// The user task an agent run is working on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
}

impl Instruction {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, TrajectoryError> {
        let instruction = Self {
            id: id.into(),
            text: text.into(),
            scenario: None,
        };
        instruction.validate()?;
        Ok(instruction)
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.scenario = Some(scenario);
        self
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.text.trim().is_empty() {
            return Err(TrajectoryError::EmptyInstruction);
        }
        Ok(())
    }
}

/// One thought / action / observation cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThoughtStep {
    pub index: usize,
    pub thought: String,
    pub action: String,
    /// Raw serialized tool arguments, kept exactly as the model emitted them.
    pub action_input: String,
    /// `None` until the environment has responded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
}

impl ThoughtStep {
    pub fn new(
        index: usize,
        thought: impl Into<String>,
        action: impl Into<String>,
        action_input: impl Into<String>,
    ) -> Self {
        Self {
            index,
            thought: thought.into(),
            action: action.into(),
            action_input: action_input.into(),
            observation: None,
        }
    }

    pub fn observed(mut self, observation: impl Into<String>) -> Self {
        self.observation = Some(observation.into());
        self
    }
}

/// A full behavioral trajectory under one instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub instruction: Instruction,
    #[serde(default)]
    pub steps: Vec<ThoughtStep>,
    /// Thought that accompanied the final answer, when the run terminated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_thought: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
}

impl Trajectory {
    pub fn new(instruction: Instruction) -> Self {
        Self {
            instruction,
            steps: Vec::new(),
            final_thought: None,
            final_answer: None,
        }
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        self.instruction.validate()?;
        let last = self.steps.len().saturating_sub(1);
        for (expected, step) in self.steps.iter().enumerate() {
            if step.index != expected {
                return Err(TrajectoryError::IndexGap {
                    expected,
                    found: step.index,
                });
            }
            if step.thought.trim().is_empty() {
                return Err(TrajectoryError::EmptyThought(step.index));
            }
            if step.observation.is_none() && expected != last {
                return Err(TrajectoryError::MissingObservation(step.index));
            }
        }
        if self.final_answer.is_some()
            && self.steps.last().is_some_and(|s| s.observation.is_none())
        {
            return Err(TrajectoryError::FinalBeforeObservation);
        }
        Ok(())
    }

    /// `(thought, observation)` pairs of every observed step, in order.
    pub fn history(&self) -> Vec<(String, String)> {
        self.steps
            .iter()
            .filter_map(|s| s.observation.as_ref().map(|o| (s.thought.clone(), o.clone())))
            .collect()
    }

    /// The whole run as ReAct text, one block per step.
    pub fn render_transcript(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&render_react_step(&ParsedStep::Step {
                thought: step.thought.clone(),
                action: step.action.clone(),
                action_input: step.action_input.clone(),
            }));
            out.push('\n');
            if let Some(obs) = &step.observation {
                out.push_str("Observation: ");
                out.push_str(obs);
                out.push('\n');
            }
        }
        if let (Some(thought), Some(answer)) = (&self.final_thought, &self.final_answer) {
            out.push_str(&render_react_step(&ParsedStep::Final {
                thought: thought.clone(),
                answer: answer.clone(),
            }));
            out.push('\n');
        }
        out
    }
}
