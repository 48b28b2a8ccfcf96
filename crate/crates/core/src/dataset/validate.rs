use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{PairKind, TrainingPair};
use crate::trajectory::context::{check_tag_structure, escape_body};
use crate::trajectory::thoughts_equivalent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FindingKind {
    UnbalancedTags,
    EmptyTarget,
    /// The context does not end with the pair's source thought.
    SourceNotInContext,
    WarmupTargetDiffers,
    CoreTargetUnchanged,
    ContextOverBudget,
    DuplicateProvenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub trajectory_id: String,
    pub step: usize,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
    pub counts: BTreeMap<PairKind, usize>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has(&self, kind: FindingKind) -> bool {
        self.errors.iter().chain(&self.warnings).any(|f| f.kind == kind)
    }
}

/// Check with the default 32,000 character context budget.
pub fn validate_dataset(pairs: &[TrainingPair]) -> ValidationReport {
    validate_dataset_with(pairs, crate::engine::EngineConfig::default().history_char_budget)
}

pub fn validate_dataset_with(pairs: &[TrainingPair], char_budget: usize) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    for p in pairs {
        *report.counts.entry(p.kind).or_default() += 1;
        let finding = |kind, detail: String| Finding {
            kind,
            trajectory_id: p.trajectory_id.clone(),
            step: p.step,
            detail,
        };
        if let Err(e) = check_tag_structure(&p.input_context) {
            report.errors.push(finding(FindingKind::UnbalancedTags, e.to_string()));
        }
        if p.target.trim().is_empty() {
            report.errors.push(finding(FindingKind::EmptyTarget, String::new()));
        }
        if !p.input_context.ends_with(escape_body(&p.source_thought).as_ref()) {
            report
                .errors
                .push(finding(FindingKind::SourceNotInContext, p.source_thought.clone()));
        }
        match p.kind {
            PairKind::Warmup if p.target != p.source_thought => {
                report.errors.push(finding(FindingKind::WarmupTargetDiffers, p.target.clone()));
            }
            PairKind::Core if thoughts_equivalent(&p.target, &p.source_thought) => {
                report.errors.push(finding(FindingKind::CoreTargetUnchanged, p.target.clone()));
            }
            _ => {}
        }
        let len = p.input_context.chars().count();
        if len > char_budget {
            report.warnings.push(finding(
                FindingKind::ContextOverBudget,
                format!("{len} > {char_budget} characters"),
            ));
        }
        if !seen.insert((p.trajectory_id.as_str(), p.step)) {
            report.warnings.push(finding(FindingKind::DuplicateProvenance, String::new()));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(kind: PairKind, ctx: &str, source: &str, target: &str) -> TrainingPair {
        TrainingPair {
            kind,
            input_context: ctx.into(),
            target: target.into(),
            source_thought: source.into(),
            trajectory_id: "t".into(),
            step: 0,
        }
    }

    #[test]
    fn clean_pairs_pass() {
        let r = validate_dataset(&[
            pair(PairKind::Warmup, "do it\nLook first.", "Look first.", "Look first."),
            TrainingPair {
                step: 1,
                ..pair(
                    PairKind::Core,
                    "do it\n<thought>a</thought><observation>b</observation>\nDelete all.",
                    "Delete all.",
                    "Ask before deleting.",
                )
            },
        ]);
        assert!(r.is_ok(), "{r:?}");
        assert!(r.warnings.is_empty());
        assert_eq!(r.counts[&PairKind::Warmup], 1);
        assert_eq!(r.counts[&PairKind::Core], 1);
    }

    #[test]
    fn each_rule_fires() {
        let cases = [
            (pair(PairKind::Core, "i\nx", "x", "x."), FindingKind::CoreTargetUnchanged),
            (pair(PairKind::Warmup, "i\nx", "x", "y"), FindingKind::WarmupTargetDiffers),
            (pair(PairKind::Warmup, "i\n<thought>a<observation>b</observation>\nx", "x", "x"), FindingKind::UnbalancedTags),
            (pair(PairKind::Core, "i\nx", "x", "  "), FindingKind::EmptyTarget),
            (pair(PairKind::Warmup, "i\nz", "x", "x"), FindingKind::SourceNotInContext),
        ];
        for (p, kind) in cases {
            let r = validate_dataset(&[p]);
            assert!(r.errors.iter().any(|f| f.kind == kind), "{kind:?}: {r:?}");
        }
    }

    #[test]
    fn warnings_for_budget_and_duplicates() {
        let p = pair(PairKind::Warmup, "instruction\nx", "x", "x");
        let r = validate_dataset_with(&[p.clone(), p], 5);
        assert!(r.is_ok());
        assert!(r.has(FindingKind::ContextOverBudget));
        assert!(r.has(FindingKind::DuplicateProvenance));
    }
}
