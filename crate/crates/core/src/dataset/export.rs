use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnnotatedTrajectory, DatasetError, PairKind, TrainingPair};
use crate::jsonl::{read_jsonl, write_jsonl};

/// One line of the training file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub schema_version: u32,
    pub kind: PairKind,
    pub input: String,
    pub output: String,
    pub trajectory_id: String,
    pub step: usize,
    /// Original thought; lets import rebuild core pairs exactly.
    pub source: String,
}

impl From<&TrainingPair> for PairRecord {
    fn from(p: &TrainingPair) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            kind: p.kind,
            input: p.input_context.clone(),
            output: p.target.clone(),
            trajectory_id: p.trajectory_id.clone(),
            step: p.step,
            source: p.source_thought.clone(),
        }
    }
}

impl From<PairRecord> for TrainingPair {
    fn from(r: PairRecord) -> Self {
        Self {
            kind: r.kind,
            input_context: r.input,
            target: r.output,
            source_thought: r.source,
            trajectory_id: r.trajectory_id,
            step: r.step,
        }
    }
}

pub fn export_jsonl(pairs: &[TrainingPair], path: impl AsRef<Path>) -> Result<usize, DatasetError> {
    let records: Vec<PairRecord> = pairs.iter().map(PairRecord::from).collect();
    Ok(write_jsonl(path, &records)?)
}

pub fn import_jsonl(path: impl AsRef<Path>) -> Result<Vec<TrainingPair>, DatasetError> {
    let records: Vec<PairRecord> = read_jsonl(path)?;
    Ok(records.into_iter().map(TrainingPair::from).collect())
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<AnnotatedTrajectory>, DatasetError> {
    Ok(read_jsonl(path)?)
}

pub fn write_corpus(corpus: &[AnnotatedTrajectory], path: impl AsRef<Path>) -> Result<usize, DatasetError> {
    Ok(write_jsonl(path, corpus)?)
}
