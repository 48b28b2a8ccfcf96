//! Fine-tuning data from annotated trajectories.
//!
//! Every annotated step becomes one [`TrainingPair`]. Safe steps give a
//! warm-up pair whose target is the thought itself; unsafe steps give a core
//! pair whose target is the annotator's corrected thought. The input side is
//! the same tagged context the correction backend sees at run time.
//!
//! Corpus input is JSONL, one [`AnnotatedTrajectory`] per line:
//!
//! ```json
//! {"id":"t-17","instruction":{"id":"i-17","text":"Tidy my home folder","scenario":"Data Integrity Risk"},
//!  "steps":[{"thought":"...","action":"ListFiles","action_input":"{}","observation":"...",
//!            "label":"unsafe","explanation":"...","corrected_thought":"..."}],
//!  "final_answer":"Done."}
//! ```

mod extract;
mod export;
mod split;
pub mod synthetic;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::JsonlError;
use crate::trajectory::{ContextError, Instruction, ThoughtStep, Trajectory, TrajectoryError};

pub use export::{export_jsonl, import_jsonl, read_corpus, write_corpus, PairRecord};
pub use extract::{extract_corpus, extract_training_pairs, PairCounts};
pub use split::{split_validation, SplitSpec};
pub use validate::{validate_dataset, validate_dataset_with, Finding, FindingKind, ValidationReport};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("trajectory {trajectory} step {step}: {reason}")]
    InvalidAnnotation {
        trajectory: String,
        step: usize,
        reason: &'static str,
    },
    #[error("trajectory {trajectory}: {source}")]
    InvalidTrajectory {
        trajectory: String,
        source: TrajectoryError,
    },
    #[error("trajectory {trajectory}: {source}")]
    Context {
        trajectory: String,
        source: ContextError,
    },
    #[error("validation count {requested} exceeds corpus size {available}")]
    CountExceedsCorpus { requested: usize, available: usize },
    #[error("pair {index} is a warm-up pair; only core pairs are split")]
    NotCore { index: usize },
    #[error("cannot place {steps} steps into {trajectories} trajectories")]
    Infeasible { steps: usize, trajectories: usize },
    #[error(transparent)]
    Io(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SafetyLabel {
    Safe,
    Unsafe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyAnnotation {
    pub label: SafetyLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_thought: Option<String>,
}

impl SafetyAnnotation {
    pub fn safe() -> Self {
        Self {
            label: SafetyLabel::Safe,
            explanation: None,
            corrected_thought: None,
        }
    }

    pub fn unsafe_with(corrected: impl Into<String>, explanation: impl Into<String>) -> Self {
        Self {
            label: SafetyLabel::Unsafe,
            explanation: Some(explanation.into()),
            corrected_thought: Some(corrected.into()),
        }
    }

    fn check(&self) -> Result<(), &'static str> {
        match (self.label, &self.corrected_thought) {
            (SafetyLabel::Unsafe, None) => Err("unsafe step has no corrected thought"),
            (SafetyLabel::Unsafe, Some(c)) if c.trim().is_empty() => Err("unsafe step has an empty corrected thought"),
            (SafetyLabel::Safe, Some(_)) => Err("safe step carries a corrected thought"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedStep {
    pub thought: String,
    pub action: String,
    pub action_input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    #[serde(flatten)]
    pub annotation: SafetyAnnotation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedTrajectory {
    pub id: String,
    pub instruction: Instruction,
    pub steps: Vec<AnnotatedStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
}

impl AnnotatedTrajectory {
    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory {
            instruction: self.instruction.clone(),
            steps: self
                .steps
                .iter()
                .enumerate()
                .map(|(i, s)| ThoughtStep {
                    index: i,
                    thought: s.thought.clone(),
                    action: s.action.clone(),
                    action_input: s.action_input.clone(),
                    observation: s.observation.clone(),
                })
                .collect(),
            final_thought: None,
            final_answer: self.final_answer.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        self.to_trajectory()
            .validate()
            .map_err(|source| DatasetError::InvalidTrajectory {
                trajectory: self.id.clone(),
                source,
            })?;
        for (step, s) in self.steps.iter().enumerate() {
            s.annotation
                .check()
                .map_err(|reason| DatasetError::InvalidAnnotation {
                    trajectory: self.id.clone(),
                    step,
                    reason,
                })?;
        }
        Ok(())
    }

    pub fn count_label(&self, label: SafetyLabel) -> usize {
        self.steps.iter().filter(|s| s.annotation.label == label).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Warmup,
    Core,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub kind: PairKind,
    pub input_context: String,
    pub target: String,
    /// The step's original thought, which is also the tail of `input_context`.
    pub source_thought: String,
    pub trajectory_id: String,
    pub step: usize,
}
