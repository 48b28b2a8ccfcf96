use std::collections::HashSet;

use aligner_gate::dataset::synthetic::{generate_corpus, generate_with_label_counts};
use aligner_gate::dataset::{
    export_jsonl, extract_corpus, import_jsonl, read_corpus, split_validation, validate_dataset,
    write_corpus, AnnotatedStep, AnnotatedTrajectory, DatasetError, FindingKind, PairCounts,
    PairKind, SafetyAnnotation, SafetyLabel, SplitSpec, TrainingPair,
};
use aligner_gate::trajectory::Instruction;
use proptest::prelude::*;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Reference permutation computed from the raw ChaCha8 stream with 128-bit
// arithmetic for the rejection threshold.
fn oracle_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<usize> = (0..n).collect();
    let mut i = n;
    while i > 1 {
        i -= 1;
        let bound = (i + 1) as u128;
        let reject_below = (1u128 << 64) % bound;
        let j = loop {
            let x = rng.next_u64() as u128;
            if x >= reject_below {
                break (x % bound) as usize;
            }
        };
        v.swap(i, j);
    }
    v
}

fn core_pairs(n: usize) -> Vec<TrainingPair> {
    (0..n)
        .map(|i| TrainingPair {
            kind: PairKind::Core,
            input_context: format!("task\nthought {i}"),
            target: format!("safer {i}"),
            source_thought: format!("thought {i}"),
            trajectory_id: format!("t{i}"),
            step: 0,
        })
        .collect()
}

#[test]
fn pair_counts_match_label_recount() {
    for seed in 0..5 {
        let corpus = generate_corpus(seed, 300);
        let pairs = extract_corpus(&corpus).unwrap();
        let mut safe = 0;
        let mut unsafe_ = 0;
        for t in &corpus {
            for s in &t.steps {
                match s.annotation.label {
                    SafetyLabel::Safe => safe += 1,
                    SafetyLabel::Unsafe => unsafe_ += 1,
                }
            }
        }
        assert_eq!(PairCounts::of(&pairs), PairCounts { warmup: safe, core: unsafe_ });
        assert!(validate_dataset(&pairs).is_ok());
    }
}

#[test]
fn pairs_carry_only_prior_steps() {
    let corpus = generate_corpus(11, 50);
    let pairs = extract_corpus(&corpus).unwrap();
    let mut it = pairs.iter();
    for t in &corpus {
        for (i, s) in t.steps.iter().enumerate() {
            let p = it.next().unwrap();
            assert_eq!((p.trajectory_id.as_str(), p.step), (t.id.as_str(), i));
            assert_eq!(p.input_context.matches("<thought>").count(), i);
            // Later thoughts never leak backwards.
            for later in &t.steps[i + 1..] {
                assert!(!p.input_context.contains(&format!("<thought>{}</thought>", later.thought)));
            }
            match s.annotation.label {
                SafetyLabel::Safe => assert_eq!(p.target, s.thought),
                SafetyLabel::Unsafe => assert_eq!(Some(&p.target), s.annotation.corrected_thought.as_ref()),
            }
        }
    }
    assert!(it.next().is_none());
}

#[test]
fn full_size_corpus_counts() {
    let corpus = generate_with_label_counts(7, 5000, 14_216, 11_901).unwrap();
    let pairs = extract_corpus(&corpus).unwrap();
    assert_eq!(PairCounts::of(&pairs), PairCounts { warmup: 14_216, core: 11_901 });
    let core: Vec<_> = pairs.into_iter().filter(|p| p.kind == PairKind::Core).collect();
    let (val, train) = split_validation(&core, SplitSpec { validation_count: 1000, seed: 7 }).unwrap();
    assert_eq!((val.len(), train.len()), (1000, 10_901));
}

#[test]
fn split_matches_reference_permutation() {
    for (n, k, seed) in [(1, 1, 0), (2, 1, 3), (10, 4, 42), (257, 100, 9), (1000, 1000, 5)] {
        let pairs = core_pairs(n);
        let (val, train) = split_validation(&pairs, SplitSpec { validation_count: k, seed }).unwrap();
        let perm = oracle_permutation(n, seed);
        let want_val: Vec<_> = perm[..k].iter().map(|&i| pairs[i].clone()).collect();
        let mut rest: Vec<usize> = perm[k..].to_vec();
        rest.sort();
        let want_train: Vec<_> = rest.iter().map(|&i| pairs[i].clone()).collect();
        assert_eq!(val, want_val, "n={n} k={k}");
        assert_eq!(train, want_train);
    }
}

#[test]
fn split_errors() {
    let pairs = core_pairs(3);
    assert!(matches!(
        split_validation(&pairs, SplitSpec { validation_count: 4, seed: 0 }),
        Err(DatasetError::CountExceedsCorpus { requested: 4, available: 3 })
    ));
    let mut mixed = pairs.clone();
    mixed[1].kind = PairKind::Warmup;
    assert!(matches!(
        split_validation(&mixed, SplitSpec { validation_count: 1, seed: 0 }),
        Err(DatasetError::NotCore { index: 1 })
    ));
}

proptest! {
    #[test]
    fn split_is_a_deterministic_partition(n in 0usize..200, k in 0usize..200, seed in any::<u64>()) {
        let k = k.min(n);
        let pairs = core_pairs(n);
        let spec = SplitSpec { validation_count: k, seed };
        let (val, train) = split_validation(&pairs, spec).unwrap();
        prop_assert_eq!(val.len(), k);
        prop_assert_eq!(train.len(), n - k);
        let ids = |v: &[TrainingPair]| v.iter().map(|p| p.trajectory_id.clone()).collect::<HashSet<_>>();
        let (vi, ti) = (ids(&val), ids(&train));
        prop_assert!(vi.is_disjoint(&ti));
        prop_assert_eq!(vi.len() + ti.len(), n);
        // Training keeps input order.
        let pos: Vec<usize> = train.iter().map(|p| p.trajectory_id[1..].parse().unwrap()).collect();
        prop_assert!(pos.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(split_validation(&pairs, spec).unwrap(), (val, train));
    }
}

#[test]
fn jsonl_round_trip_keeps_unicode() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_corpus(3, 60);
    let cpath = dir.path().join("corpus.jsonl");
    assert_eq!(write_corpus(&corpus, &cpath).unwrap(), 60);
    assert_eq!(read_corpus(&cpath).unwrap(), corpus);

    let mut pairs = extract_corpus(&corpus).unwrap();
    pairs.push(TrainingPair {
        kind: PairKind::Core,
        input_context: "Zoë's café 東京\n<thought>a &lt;/thought> \"q\"</thought><observation>\u{1F4C1}\ttab</observation>\nrm -rf ~".into(),
        target: "Ask first.\nThen act.".into(),
        source_thought: "rm -rf ~".into(),
        trajectory_id: "unicode".into(),
        step: 1,
    });
    let ppath = dir.path().join("pairs.jsonl");
    assert_eq!(export_jsonl(&pairs, &ppath).unwrap(), pairs.len());
    let text = std::fs::read_to_string(&ppath).unwrap();
    assert_eq!(text.lines().count(), pairs.len());
    assert!(text.contains("東京"));
    assert_eq!(import_jsonl(&ppath).unwrap(), pairs);
}

#[test]
fn validator_flags_exactly_the_broken_contexts() {
    let corpus = generate_corpus(21, 80);
    let mut pairs = extract_corpus(&corpus).unwrap();
    // Corrupt every seventh pair by deleting one closing tag.
    let mut broken = HashSet::new();
    for (i, p) in pairs.iter_mut().enumerate() {
        if i % 7 == 0 && p.input_context.contains("</observation>") {
            p.input_context = p.input_context.replacen("</observation>", "", 1);
            broken.insert((p.trajectory_id.clone(), p.step));
        }
    }
    assert!(!broken.is_empty());
    let report = validate_dataset(&pairs);
    let flagged: HashSet<_> = report
        .errors
        .iter()
        .filter(|f| f.kind == FindingKind::UnbalancedTags)
        .map(|f| (f.trajectory_id.clone(), f.step))
        .collect();
    assert_eq!(flagged, broken);
}

#[test]
fn invalid_annotations_are_refused() {
    let t = AnnotatedTrajectory {
        id: "bad".into(),
        instruction: Instruction::new("i", "Do it").unwrap(),
        steps: vec![AnnotatedStep {
            thought: "Delete everything.".into(),
            action: "Delete".into(),
            action_input: "{}".into(),
            observation: Some("done".into()),
            annotation: SafetyAnnotation {
                label: SafetyLabel::Unsafe,
                explanation: None,
                corrected_thought: None,
            },
        }],
        final_answer: None,
    };
    assert!(matches!(
        extract_corpus(&[t]),
        Err(DatasetError::InvalidAnnotation { step: 0, .. })
    ));
}
