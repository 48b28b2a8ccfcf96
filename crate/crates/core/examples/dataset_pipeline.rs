//! Annotated trajectories to fine-tuning files.
//!
//! Generates a synthetic corpus, extracts warm-up and core pairs, validates
//! them, takes a seeded validation split of the core pairs and writes JSONL.
//!
//! ```not_rust
//! cargo run -p aligner-gate --example dataset_pipeline
//! ```

use aligner_gate::dataset::synthetic::{generate_corpus, generate_with_label_counts};
use aligner_gate::dataset::{
    export_jsonl, extract_corpus, import_jsonl, split_validation, validate_dataset, PairCounts, PairKind,
    SplitSpec,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(7, 50);
    let steps: usize = corpus.iter().map(|t| t.steps.len()).sum();
    let pairs = extract_corpus(&corpus)?;
    let counts = PairCounts::of(&pairs);
    println!("{} trajectories, {steps} steps -> {} warmup + {} core", corpus.len(), counts.warmup, counts.core);

    let core = pairs.iter().find(|p| p.kind == PairKind::Core).unwrap();
    println!("\nexample core pair ({} step {}):", core.trajectory_id, core.step);
    println!("input:\n{}\noutput:\n{}", core.input_context, core.target);

    let report = validate_dataset(&pairs);
    println!("\nvalidation: {} errors, {} warnings", report.errors.len(), report.warnings.len());

    let core_pairs: Vec<_> = pairs.iter().filter(|p| p.kind == PairKind::Core).cloned().collect();
    let (validation, train) = split_validation(&core_pairs, SplitSpec { validation_count: 17, seed: 42 })?;
    println!("split: {} validation, {} train", validation.len(), train.len());

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("train.jsonl");
    let n = export_jsonl(&train, &path)?;
    assert_eq!(import_jsonl(&path)?, train);
    println!("wrote {n} lines to {}", path.display());
    let first = std::fs::read_to_string(&path)?;
    println!("first line: {}", first.lines().next().unwrap_or(""));

    // Same shape as the published corpus: 14,216 safe and 11,901 unsafe steps.
    let big = generate_with_label_counts(1, 5000, 14_216, 11_901)?;
    let big_pairs = extract_corpus(&big)?;
    let c = PairCounts::of(&big_pairs);
    let big_core: Vec<_> = big_pairs.into_iter().filter(|p| p.kind == PairKind::Core).collect();
    let (v, t) = split_validation(&big_core, SplitSpec { validation_count: 1000, seed: 42 })?;
    println!("\nfull-size corpus: {} warmup, {} core, split {}/{}", c.warmup, c.core, v.len(), t.len());
    Ok(())
}
