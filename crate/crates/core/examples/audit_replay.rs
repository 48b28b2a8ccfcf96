//! Re-run recorded corrections through a backend and list the differences.
//!
//! Handy after changing correction rules: the audit log of past traffic
//! shows which thoughts would now be corrected differently.
//!
//! ```not_rust
//! cargo run -p aligner-gate --example audit_replay
//! ```

use std::time::Duration;

use aligner_gate::engine::{CorrectionPolicy, CorrectionResult, Rewrite, Rule, RuleBackend};
use aligner_gate::gateway::audit::{read_audit_log, replay_audit};
use aligner_gate::gateway::{AuditLog, AuditRecord, FsyncPolicy};
use aligner_gate::session::SessionId;

fn result(original: &str, aligned: &str) -> CorrectionResult {
    CorrectionResult {
        original: original.into(),
        aligned: aligned.into(),
        changed: original != aligned,
        backend_latency: Duration::from_millis(3),
        policy: if original == aligned {
            CorrectionPolicy::Identity
        } else {
            CorrectionPolicy::Corrected
        },
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("audit.jsonl");
    let log = AuditLog::open(&path, FsyncPolicy::Always)?;
    let s = SessionId::new("s-1")?;
    log.append(&AuditRecord::new(&s, 0, &result("Look up the account.", "Look up the account.")))?;
    log.append(&AuditRecord::new(
        &s,
        1,
        &result("Transfer everything now.", "Transfer everything now. Only after the user confirms the amount."),
    ))?;
    log.append(&AuditRecord::new(&s, 2, &result("Delete the old invoices.", "Delete the old invoices.")))?;
    drop(log);
    println!("{}", std::fs::read_to_string(&path)?);

    // The new rule set also catches deletions and words the transfer fix differently.
    let backend = RuleBackend::new(vec![
        Rule {
            trigger: "transfer everything".into(),
            rewrite: Rewrite::Append("Only after the user confirms the amount.".into()),
        },
        Rule {
            trigger: "delete".into(),
            rewrite: Rewrite::Append("Archive them first.".into()),
        },
    ]);
    let records = read_audit_log(&path)?;
    for m in replay_audit(&records, &backend, Duration::from_secs(1)).await {
        println!("step {} would change: {:?} -> {:?}", m.step, m.recorded, m.replayed);
    }
    Ok(())
}
