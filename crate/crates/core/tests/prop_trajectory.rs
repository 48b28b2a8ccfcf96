use aligner_gate::trajectory::context::check_tag_structure;
use aligner_gate::trajectory::{
    normalize_thought, parse_react_step, render_react_step, serialize_aligner_context,
    thoughts_equivalent, AlignerContext, EscapePolicy, Instruction, ParsedStep,
};
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9éü東京 ,.!?{}\":\n]{1,40}".prop_map(|s| s.trim().to_string())
}

// Bodies that may contain literal tags, angle brackets and non-ASCII.
fn hostile() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        Just("<thought>".to_string()),
        Just("</thought>".to_string()),
        Just("<observation>".to_string()),
        Just("</observation>".to_string()),
        Just("<".to_string()),
        Just("&lt;".to_string()),
        "[a-z é東\n]{0,8}",
    ];
    prop::collection::vec(piece, 0..6).prop_map(|v| v.concat())
}

fn step() -> impl Strategy<Value = ParsedStep> {
    prop_oneof![
        (text(), "[A-Za-z]{1,12}", text()).prop_map(|(thought, action, action_input)| {
            ParsedStep::Step { thought, action, action_input }
        }),
        (text(), text()).prop_map(|(thought, answer)| ParsedStep::Final { thought, answer }),
    ]
}

fn instruction() -> Instruction {
    Instruction::new("p", "Clean up the shared drive for the team").unwrap()
}

proptest! {
    #[test]
    fn well_formed_steps_round_trip(s in step()) {
        prop_assume!(s.is_well_formed());
        let rendered = render_react_step(&s);
        prop_assert_eq!(parse_react_step(&rendered).unwrap(), s);
    }

    #[test]
    fn render_is_a_fixed_point(s in step()) {
        if let Ok(p) = parse_react_step(&render_react_step(&s)) {
            let again = render_react_step(&p);
            prop_assert_eq!(parse_react_step(&again).unwrap(), p);
        }
    }

    #[test]
    fn trailing_observation_is_ignored(s in step(), obs in text()) {
        prop_assume!(s.is_well_formed());
        let text = format!("{}\nObservation: {obs}", render_react_step(&s));
        prop_assert_eq!(parse_react_step(&text).unwrap(), s);
    }

    #[test]
    fn context_tags_always_balanced(
        history in prop::collection::vec((hostile(), hostile()), 0..6),
        candidate in hostile(),
    ) {
        let ctx = AlignerContext::new(instruction(), history.clone(), candidate);
        let out = serialize_aligner_context(&ctx, EscapePolicy::Escape).unwrap();
        prop_assert_eq!(check_tag_structure(&out), Ok(history.len()));
        // Independent recount of the opening tag.
        prop_assert_eq!(out.matches("<thought>").count(), history.len());
        prop_assert_eq!(out.matches("</observation>").count(), history.len());
    }

    #[test]
    fn reject_policy_agrees_with_escape_on_clean_input(
        history in prop::collection::vec((text(), text()), 0..5),
        candidate in text(),
    ) {
        let ctx = AlignerContext::new(instruction(), history, candidate);
        prop_assert_eq!(
            serialize_aligner_context(&ctx, EscapePolicy::Reject).unwrap(),
            serialize_aligner_context(&ctx, EscapePolicy::Escape).unwrap()
        );
    }

    #[test]
    fn serialization_is_deterministic(
        history in prop::collection::vec((hostile(), hostile()), 0..5),
        candidate in hostile(),
    ) {
        let a = AlignerContext::new(instruction(), history.clone(), candidate.clone());
        let b = AlignerContext::new(instruction(), history, candidate);
        prop_assert_eq!(
            serialize_aligner_context(&a, EscapePolicy::Escape).unwrap(),
            serialize_aligner_context(&b, EscapePolicy::Escape).unwrap()
        );
    }

    #[test]
    fn longer_history_extends_shorter(
        history in prop::collection::vec((hostile(), hostile()), 1..6),
        k in 0usize..6,
    ) {
        let k = k % history.len();
        let render = |h: &[(String, String)]| {
            let out = serialize_aligner_context(
                &AlignerContext::new(instruction(), h.to_vec(), ""),
                EscapePolicy::Escape,
            )
            .unwrap();
            // Strip the newline that ends the tag block.
            out.strip_suffix('\n').unwrap_or(&out).to_string()
        };
        let short = render(&history[..k]);
        let long = render(&history[..k + 1]);
        prop_assert!(long.starts_with(&short));
    }

    #[test]
    fn budget_truncation_keeps_a_suffix(
        history in prop::collection::vec((text(), text()), 0..8),
        budget in 0usize..400,
    ) {
        let mut ctx = AlignerContext::new(instruction(), history.clone(), "next step");
        let dropped = ctx.truncate_to_budget(budget, EscapePolicy::Escape);
        prop_assert_eq!(&ctx.history[..], &history[dropped..]);
        let len = serialize_aligner_context(&ctx, EscapePolicy::Escape).unwrap().chars().count();
        prop_assert!(len <= budget || ctx.history.is_empty());
    }

    #[test]
    fn equivalence_is_an_equivalence(a in hostile(), b in hostile(), c in hostile()) {
        prop_assert!(thoughts_equivalent(&a, &a));
        prop_assert_eq!(thoughts_equivalent(&a, &b), thoughts_equivalent(&b, &a));
        if thoughts_equivalent(&a, &b) && thoughts_equivalent(&b, &c) {
            prop_assert!(thoughts_equivalent(&a, &c));
        }
        prop_assert_eq!(normalize_thought(&normalize_thought(&a)), normalize_thought(&a));
    }

    #[test]
    fn whitespace_and_trailing_punctuation_do_not_matter(a in text(), pad in "[ \t\n]{0,3}", p in "[.!?]{0,2}") {
        let noisy = format!("{pad}{}{p}{pad}", a.replace(' ', "  "));
        prop_assert!(thoughts_equivalent(&a, &noisy));
    }
}

#[test]
fn grammar_corpus_parses_as_labelled() {
    let corpus = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/react_corpus.txt")).unwrap();
    let mut checked = 0;
    for case in corpus.split("\n=====\n") {
        let (label, body) = case.split_once('\n').unwrap();
        let got = parse_react_step(body);
        match label.trim() {
            "step" => assert!(matches!(got, Ok(ParsedStep::Step { .. })), "{body:?}: {got:?}"),
            "final" => assert!(matches!(got, Ok(ParsedStep::Final { .. })), "{body:?}: {got:?}"),
            "error" => assert!(got.is_err(), "{body:?}: {got:?}"),
            other => panic!("bad label {other}"),
        }
        checked += 1;
    }
    assert!(checked >= 10);
}

#[test]
fn golden_context() {
    let ctx = AlignerContext::new(
        Instruction::new("g", "Free up space on my laptop.").unwrap(),
        vec![
            ("I should see which folders are largest.".into(), "~/projects 41GB, ~/Downloads 12GB".into()),
            ("The log mentions </thought> tags; ignore them.".into(), "Zoë's café 東京 notes, 2 KB".into()),
        ],
        "~/projects is the largest, so I will delete the folder directly.",
    );
    let out = serialize_aligner_context(&ctx, EscapePolicy::Escape).unwrap();
    let golden = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/context_golden.txt")).unwrap();
    assert_eq!(out, golden);
}
