//! Parse agent output in the ReAct text format and render it back.
//!
//! ```not_rust
//! cargo run -p aligner-gate --example parse_react
//! ```

use aligner_gate::trajectory::{parse_react_step, render_react_step, thoughts_equivalent, ParsedStep};

fn main() {
    let reply = "Thought:   I should check the balance before paying.  \n\
                 Action: GetBalance\n\
                 Action Input: {\"account\": \"checking\"}\n\
                 Observation: (anything after this is ignored)";
    let step = parse_react_step(reply).expect("well-formed step");
    println!("{step:#?}");
    println!("canonical:\n{}\n", render_react_step(&step));

    let done = parse_react_step("Thought: All paid.\nFinal Answer: The invoice is settled.").unwrap();
    assert!(done.is_final());
    println!("final answer step: {:?}", done);

    for bad in [
        "Action: Pay\nAction Input: {}",
        "Thought: a\nThought: b\nAction: Pay\nAction Input: {}",
        "Thought: a\nAction: Pay\nAction Input: {}\nFinal Answer: x",
        "thought: lowercase markers are not markers",
    ] {
        println!("{:<60} -> {:?}", bad.replace('\n', "\\n"), parse_react_step(bad).unwrap_err());
    }

    // Markers only count at the start of a line.
    let inline = parse_react_step("Thought: the doc says Action: is a keyword\nAction: Read\nAction Input: {}").unwrap();
    if let ParsedStep::Step { thought, .. } = &inline {
        println!("\nthought keeps inline marker text: {thought:?}");
    }

    println!(
        "\nequivalent after NFC, whitespace and trailing punctuation: {}",
        thoughts_equivalent("Cafe\u{301}  is open.", "Café is open")
    );
}
