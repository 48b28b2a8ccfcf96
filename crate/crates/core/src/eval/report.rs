use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::metrics::benchmark_of;
use super::{
    average_score, failure_mode_rates, format_percent, format_rate, helpfulness_rate, leakage_rate,
    round_half_up, safety_rate, Benchmark, EvalError, EvalRecord, FailureMode, ScoreField,
};
use crate::engine::CorrectionPolicy;
use crate::gateway::AuditRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leakage_rate: Option<f64>,
}

/// What the gateway did to the thoughts behind the evaluated runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrectionStats {
    pub steps: usize,
    pub sessions: usize,
    pub changed: usize,
    pub unchanged: usize,
    pub fail_open: usize,
    pub change_rate: f64,
}

pub fn correction_stats(audit: &[AuditRecord]) -> CorrectionStats {
    let changed = audit.iter().filter(|r| r.changed).count();
    let fail_open = audit
        .iter()
        .filter(|r| r.policy == CorrectionPolicy::FailOpenOriginal)
        .count();
    let sessions: BTreeSet<&str> = audit.iter().map(|r| r.session.as_str()).collect();
    CorrectionStats {
        steps: audit.len(),
        sessions: sessions.len(),
        changed,
        unchanged: audit.len() - changed,
        fail_open,
        change_rate: if audit.is_empty() {
            0.0
        } else {
            changed as f64 / audit.len() as f64
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub benchmark: Benchmark,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub helpfulness_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_safety_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_helpfulness_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leakage_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_failure_mode: Option<BTreeMap<FailureMode, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_category: Option<BTreeMap<String, CategoryStats>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrections: Option<CorrectionStats>,
    /// Table-style strings for the fields above.
    pub display: BTreeMap<String, String>,
}

impl MetricReport {
    pub fn with_corrections(mut self, audit: &[AuditRecord]) -> Self {
        let stats = correction_stats(audit);
        self.display.insert("correction_change_rate".into(), format_rate(stats.change_rate));
        self.corrections = Some(stats);
        self
    }
}

fn category_stats(b: Benchmark, group: &[EvalRecord]) -> Result<CategoryStats, EvalError> {
    Ok(CategoryStats {
        n: group.len(),
        safety_rate: (b != Benchmark::PrivacyLens).then(|| safety_rate(group)).transpose()?,
        leakage_rate: (b == Benchmark::PrivacyLens).then(|| leakage_rate(group)).transpose()?,
    })
}

/// Every metric that applies to the records' benchmark.
pub fn report(records: &[EvalRecord]) -> Result<MetricReport, EvalError> {
    let b = benchmark_of(records)?;
    for r in records {
        r.validate()?;
    }
    let mut rep = MetricReport {
        schema_version: crate::SCHEMA_VERSION,
        benchmark: b,
        n: records.len(),
        safety_rate: None,
        helpfulness_rate: None,
        avg_safety_score: None,
        avg_helpfulness_score: None,
        leakage_rate: None,
        per_failure_mode: None,
        per_category: None,
        corrections: None,
        display: BTreeMap::new(),
    };
    match b {
        Benchmark::ToolEmu => {
            rep.safety_rate = Some(safety_rate(records)?);
            rep.helpfulness_rate = Some(helpfulness_rate(records)?);
            rep.avg_safety_score = Some(average_score(records, ScoreField::Safety)?);
            rep.avg_helpfulness_score = Some(average_score(records, ScoreField::Helpfulness)?);
        }
        Benchmark::PrivacyLens => {
            rep.leakage_rate = Some(leakage_rate(records)?);
            rep.avg_helpfulness_score = Some(average_score(records, ScoreField::Helpfulness)?);
        }
        Benchmark::AgentSafetyBench => {
            rep.safety_rate = Some(safety_rate(records)?);
            rep.per_failure_mode = Some(failure_mode_rates(records)?);
        }
    }

    let mut groups: BTreeMap<&str, Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        if let Some(c) = &r.risk_category {
            groups.entry(c).or_default().push(r.clone());
        }
    }
    if !groups.is_empty() {
        let mut per = BTreeMap::new();
        for (c, group) in groups {
            per.insert(c.to_string(), category_stats(b, &group)?);
        }
        rep.per_category = Some(per);
    }

    let d = &mut rep.display;
    for (key, v) in [("safety_rate", rep.safety_rate), ("helpfulness_rate", rep.helpfulness_rate)] {
        if let Some(v) = v {
            d.insert(key.into(), format_rate(v));
        }
    }
    for (key, v) in [
        ("avg_safety_score", rep.avg_safety_score),
        ("avg_helpfulness_score", rep.avg_helpfulness_score),
    ] {
        if let Some(v) = v {
            d.insert(key.into(), format!("{:.2}", round_half_up(v, 2)));
        }
    }
    if let Some(v) = rep.leakage_rate {
        d.insert("leakage_rate".into(), format_percent(v));
    }
    for (m, v) in rep.per_failure_mode.iter().flatten() {
        d.insert(format!("{m:?}"), format_rate(*v));
    }
    Ok(rep)
}
