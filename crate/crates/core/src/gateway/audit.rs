//! Append-only JSONL record of every aligned step.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{CorrectionBackend, CorrectionPolicy, CorrectionRequest, CorrectionResult};
use crate::session::SessionId;
use crate::trajectory::thoughts_equivalent;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit log {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("audit log line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsyncPolicy {
    /// Flush to the OS after each record.
    #[default]
    Flush,
    /// Flush and fsync after each record.
    Always,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    #[serde(default = "crate::schema_version")]
    pub schema_version: u32,
    pub session: String,
    pub step: usize,
    pub original: String,
    pub aligned: String,
    pub changed: bool,
    pub policy: CorrectionPolicy,
    pub latency_ms: f64,
}

impl AuditRecord {
    pub fn new(session: &SessionId, step: usize, c: &CorrectionResult) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            session: session.to_string(),
            step,
            original: c.original.clone(),
            aligned: c.aligned.clone(),
            changed: c.changed,
            policy: c.policy,
            latency_ms: c.backend_latency.as_secs_f64() * 1000.0,
        }
    }
}

pub struct AuditLog {
    path: PathBuf,
    fsync: FsyncPolicy,
    writer: Mutex<BufWriter<File>>,
}

impl AuditLog {
    pub fn open(path: impl AsRef<Path>, fsync: FsyncPolicy) -> Result<Self, AuditError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| AuditError::Io {
                path: path.clone(),
                source,
            })?;
        Ok(Self {
            path,
            fsync,
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &AuditRecord) -> Result<(), AuditError> {
        let mut line = serde_json::to_vec(record).expect("audit record serializes");
        line.push(b'\n');
        let io = |source| AuditError::Io {
            path: self.path.clone(),
            source,
        };
        let mut w = self.writer.lock().unwrap();
        w.write_all(&line).map_err(io)?;
        w.flush().map_err(io)?;
        if self.fsync == FsyncPolicy::Always {
            w.get_ref().sync_data().map_err(io)?;
        }
        Ok(())
    }
}

pub fn read_audit_log(path: impl AsRef<Path>) -> Result<Vec<AuditRecord>, AuditError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| AuditError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| AuditError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| AuditError::Parse {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

/// A replayed record whose aligned thought came out differently.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    pub session: String,
    pub step: usize,
    pub recorded: String,
    pub replayed: String,
}

/// Re-run every corrected or identity record through `backend` and report
/// the ones whose aligned thought differs. Fail-open records are skipped,
/// since no backend output was recorded for them. Replay sees only the
/// recorded original thought, so it is exact for backends that look at the
/// candidate alone.
pub async fn replay_audit(
    records: &[AuditRecord],
    backend: &dyn CorrectionBackend,
    deadline: Duration,
) -> Vec<ReplayMismatch> {
    let mut mismatches = Vec::new();
    for r in records {
        if r.policy == CorrectionPolicy::FailOpenOriginal {
            continue;
        }
        let request = CorrectionRequest {
            prompt: r.original.clone(),
            candidate: r.original.clone(),
        };
        let replayed = match backend.correct(&request, deadline).await {
            Ok(text) => text.trim().to_string(),
            Err(e) => format!("<error: {e}>"),
        };
        let same = replayed == r.aligned
            || (!r.changed && thoughts_equivalent(&replayed, &r.original));
        if !same {
            mismatches.push(ReplayMismatch {
                session: r.session.clone(),
                step: r.step,
                recorded: r.aligned.clone(),
                replayed,
            });
        }
    }
    mismatches
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{IdentityBackend, Rewrite, Rule, RuleBackend};

    fn record(original: &str, aligned: &str, changed: bool) -> AuditRecord {
        AuditRecord {
            schema_version: 1,
            session: "s".into(),
            step: 0,
            original: original.into(),
            aligned: aligned.into(),
            changed,
            policy: if changed {
                CorrectionPolicy::Corrected
            } else {
                CorrectionPolicy::Identity
            },
            latency_ms: 0.5,
        }
    }

    #[test]
    fn append_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let log = AuditLog::open(&path, FsyncPolicy::Always).unwrap();
        let a = record("a", "a", false);
        let b = record("b without confirmation", "b fixed", true);
        log.append(&a).unwrap();
        log.append(&b).unwrap();
        drop(log);
        // Reopening appends rather than truncating.
        AuditLog::open(&path, FsyncPolicy::Flush).unwrap().append(&a).unwrap();
        assert_eq!(read_audit_log(&path).unwrap(), vec![a.clone(), b, a]);

        let text = std::fs::read_to_string(&path).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["session", "step", "original", "aligned", "changed", "policy", "latency_ms"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn bad_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        std::fs::write(&path, "{}\n").unwrap();
        assert!(matches!(read_audit_log(&path), Err(AuditError::Parse { line: 1, .. })));
    }

    #[tokio::test]
    async fn replay_detects_divergence() {
        let rules = RuleBackend::new(vec![Rule {
            trigger: "now".into(),
            rewrite: Rewrite::Replace("later".into()),
        }]);
        let records = vec![record("do it now", "later", true), record("wait", "wait", false)];
        assert!(replay_audit(&records, &rules, Duration::from_secs(1)).await.is_empty());
        let m = replay_audit(&records, &IdentityBackend, Duration::from_secs(1)).await;
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].replayed, "do it now");
    }
}
