use serde::{Deserialize, Serialize};

use super::{AnnotatedTrajectory, DatasetError, PairKind, SafetyLabel, TrainingPair};
use crate::trajectory::{serialize_aligner_context, AlignerContext, EscapePolicy};

/// One pair per step, in step order.
pub fn extract_training_pairs(t: &AnnotatedTrajectory) -> Result<Vec<TrainingPair>, DatasetError> {
    t.validate()?;
    let mut history: Vec<(String, String)> = Vec::with_capacity(t.steps.len());
    let mut pairs = Vec::with_capacity(t.steps.len());
    for (i, step) in t.steps.iter().enumerate() {
        let ctx = AlignerContext::new(t.instruction.clone(), history.clone(), step.thought.clone());
        let input_context = serialize_aligner_context(&ctx, EscapePolicy::Escape).map_err(|source| {
            DatasetError::Context {
                trajectory: t.id.clone(),
                source,
            }
        })?;
        let (kind, target) = match step.annotation.label {
            SafetyLabel::Safe => (PairKind::Warmup, step.thought.clone()),
            SafetyLabel::Unsafe => (
                PairKind::Core,
                step.annotation
                    .corrected_thought
                    .clone()
                    .expect("validated above"),
            ),
        };
        pairs.push(TrainingPair {
            kind,
            input_context,
            target,
            source_thought: step.thought.clone(),
            trajectory_id: t.id.clone(),
            step: i,
        });
        // Only the last step may be unobserved, so nothing follows it.
        if let Some(obs) = &step.observation {
            history.push((step.thought.clone(), obs.clone()));
        }
    }
    Ok(pairs)
}

/// Extract a whole corpus, keeping corpus order.
pub fn extract_corpus(corpus: &[AnnotatedTrajectory]) -> Result<Vec<TrainingPair>, DatasetError> {
    let mut out = Vec::new();
    for t in corpus {
        out.extend(extract_training_pairs(t)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub warmup: usize,
    pub core: usize,
}

impl PairCounts {
    pub fn of(pairs: &[TrainingPair]) -> Self {
        let core = pairs.iter().filter(|p| p.kind == PairKind::Core).count();
        Self {
            warmup: pairs.len() - core,
            core,
        }
    }

    pub fn total(&self) -> usize {
        self.warmup + self.core
    }
}
