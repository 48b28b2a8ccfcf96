//! ReAct surface grammar.
//!
//! A step is a sequence of line-prefixed fields. Markers are case-sensitive
//! and must start a line:
//!
//! ```text
//! Thought: <text, may span lines>
//! Action: <tool name>
//! Action Input: <raw arguments>
//! ```
//!
//! or, for a terminating step,
//!
//! ```text
//! Thought: <text>
//! Final Answer: <text>
//! ```
//!
//! A field body runs until the next marker line or the end of the text and is
//! trimmed of surrounding whitespace. An `Observation:` line also ends the
//! current body; anything a model writes after it is not part of the step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const THOUGHT: &str = "Thought:";
pub const ACTION: &str = "Action:";
pub const ACTION_INPUT: &str = "Action Input:";
pub const FINAL_ANSWER: &str = "Final Answer:";
pub const OBSERVATION: &str = "Observation:";

/// The four markers a ReAct prompt is expected to mention.
pub const GRAMMAR_MARKERS: [&str; 4] = [THOUGHT, ACTION, ACTION_INPUT, FINAL_ANSWER];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("step has no Thought field")]
    MissingThought,
    #[error("step contains both an Action and a Final Answer")]
    AmbiguousStep,
    #[error("malformed step: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ParsedStep {
    Step {
        thought: String,
        action: String,
        action_input: String,
    },
    Final {
        thought: String,
        answer: String,
    },
}

impl ParsedStep {
    pub fn thought(&self) -> &str {
        match self {
            ParsedStep::Step { thought, .. } | ParsedStep::Final { thought, .. } => thought,
        }
    }

    pub fn set_thought(&mut self, new: impl Into<String>) {
        match self {
            ParsedStep::Step { thought, .. } | ParsedStep::Final { thought, .. } => {
                *thought = new.into()
            }
        }
    }

    pub fn is_final(&self) -> bool {
        matches!(self, ParsedStep::Final { .. })
    }

    /// Whether rendering this step and parsing it back yields the same value.
    ///
    /// Fields must be trimmed, the thought and action nonempty, the action a
    /// single line, and no body line may begin with a marker.
    pub fn is_well_formed(&self) -> bool {
        let body_ok = |s: &str| s.trim() == s && !s.lines().any(starts_with_marker);
        match self {
            ParsedStep::Step {
                thought,
                action,
                action_input,
            } => {
                !thought.is_empty()
                    && !action.is_empty()
                    && !action.contains('\n')
                    && body_ok(thought)
                    && body_ok(action)
                    && body_ok(action_input)
            }
            ParsedStep::Final { thought, answer } => {
                !thought.is_empty() && body_ok(thought) && body_ok(answer)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Thought,
    Action,
    ActionInput,
    FinalAnswer,
    Observation,
}

// Longest prefix first so "Action Input:" is not read as "Action:".
const MARKERS: [(&str, Marker); 5] = [
    (ACTION_INPUT, Marker::ActionInput),
    (FINAL_ANSWER, Marker::FinalAnswer),
    (THOUGHT, Marker::Thought),
    (ACTION, Marker::Action),
    (OBSERVATION, Marker::Observation),
];

fn marker_of(line: &str) -> Option<(Marker, &str)> {
    MARKERS
        .iter()
        .find_map(|(prefix, m)| line.strip_prefix(prefix).map(|rest| (*m, rest)))
}

fn starts_with_marker(line: &str) -> bool {
    marker_of(line).is_some()
}

#[derive(Default)]
struct Fields {
    thought: Option<String>,
    action: Option<String>,
    action_input: Option<String>,
    final_answer: Option<String>,
}

impl Fields {
    fn slot(&mut self, marker: Marker) -> Option<&mut Option<String>> {
        match marker {
            Marker::Thought => Some(&mut self.thought),
            Marker::Action => Some(&mut self.action),
            Marker::ActionInput => Some(&mut self.action_input),
            Marker::FinalAnswer => Some(&mut self.final_answer),
            Marker::Observation => None,
        }
    }
}

/// Parse one complete model output into a step.
pub fn parse_react_step(text: &str) -> Result<ParsedStep, ParseError> {
    let mut fields = Fields::default();
    let mut current: Option<(Marker, Vec<&str>)> = None;

    let flush = |fields: &mut Fields, cur: Option<(Marker, Vec<&str>)>| -> Result<(), ParseError> {
        if let Some((marker, lines)) = cur {
            if let Some(slot) = fields.slot(marker) {
                if slot.is_some() {
                    return Err(ParseError::Malformed("repeated field marker"));
                }
                *slot = Some(lines.join("\n").trim().to_string());
            }
        }
        Ok(())
    };

    for line in text.lines() {
        match marker_of(line) {
            Some((Marker::Observation, _)) => {
                flush(&mut fields, current.take())?;
                break;
            }
            Some((marker, rest)) => {
                flush(&mut fields, current.take())?;
                current = Some((marker, vec![rest]));
            }
            None => {
                if let Some((_, lines)) = current.as_mut() {
                    lines.push(line);
                }
            }
        }
    }
    flush(&mut fields, current.take())?;

    let thought = match fields.thought {
        Some(t) if !t.is_empty() => t,
        _ => return Err(ParseError::MissingThought),
    };
    let has_action = fields.action.is_some() || fields.action_input.is_some();
    match (has_action, fields.final_answer) {
        (true, Some(_)) => Err(ParseError::AmbiguousStep),
        (false, Some(answer)) => Ok(ParsedStep::Final { thought, answer }),
        (true, None) => {
            let action = fields
                .action
                .ok_or(ParseError::Malformed("Action Input without Action"))?;
            let action_input = fields
                .action_input
                .ok_or(ParseError::Malformed("Action without Action Input"))?;
            if action.is_empty() {
                return Err(ParseError::Malformed("empty Action"));
            }
            Ok(ParsedStep::Step {
                thought,
                action,
                action_input,
            })
        }
        (false, None) => Err(ParseError::Malformed("neither Action nor Final Answer")),
    }
}

/// Canonical text for a step.
pub fn render_react_step(step: &ParsedStep) -> String {
    match step {
        ParsedStep::Step {
            thought,
            action,
            action_input,
        } => format!("{THOUGHT} {thought}\n{ACTION} {action}\n{ACTION_INPUT} {action_input}"),
        ParsedStep::Final { thought, answer } => {
            format!("{THOUGHT} {thought}\n{FINAL_ANSWER} {answer}")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(t: &str, a: &str, i: &str) -> ParsedStep {
        ParsedStep::Step {
            thought: t.into(),
            action: a.into(),
            action_input: i.into(),
        }
    }

    #[test]
    fn parses_action_step() {
        let text = "Thought: check inbox first.\nAction: GmailSearch\nAction Input: {\"query\":\"boss\"}";
        assert_eq!(
            parse_react_step(text).unwrap(),
            step("check inbox first.", "GmailSearch", "{\"query\":\"boss\"}")
        );
    }

    #[test]
    fn parses_final_step() {
        assert_eq!(
            parse_react_step("Thought: done.\nFinal Answer: Sent.").unwrap(),
            ParsedStep::Final {
                thought: "done.".into(),
                answer: "Sent.".into()
            }
        );
    }

    #[test]
    fn missing_thought() {
        assert_eq!(
            parse_react_step("Action: Foo\nAction Input: {}"),
            Err(ParseError::MissingThought)
        );
        assert_eq!(
            parse_react_step("Thought:   \nAction: Foo\nAction Input: {}"),
            Err(ParseError::MissingThought)
        );
    }

    #[test]
    fn ambiguous_and_malformed() {
        assert_eq!(
            parse_react_step("Thought: x\nAction: A\nAction Input: {}\nFinal Answer: y"),
            Err(ParseError::AmbiguousStep)
        );
        assert!(matches!(
            parse_react_step("Thought: x\nAction: A"),
            Err(ParseError::Malformed(_))
        ));
        assert!(matches!(
            parse_react_step("Thought: x"),
            Err(ParseError::Malformed(_))
        ));
        assert!(matches!(
            parse_react_step("Thought: a\nThought: b\nFinal Answer: c"),
            Err(ParseError::Malformed(_))
        ));
    }

    #[test]
    fn multiline_bodies_kept_verbatim() {
        let text = "Thought: first line\n  indented second\n\nAction: Write\nAction Input: {\n  \"a\": 1\n}\n";
        assert_eq!(
            parse_react_step(text).unwrap(),
            step("first line\n  indented second", "Write", "{\n  \"a\": 1\n}")
        );
    }

    #[test]
    fn observation_ends_the_step() {
        let text = "Thought: t\nAction: A\nAction Input: {}\nObservation: hallucinated\nThought: more";
        assert_eq!(parse_react_step(text).unwrap(), step("t", "A", "{}"));
    }

    #[test]
    fn markers_are_case_sensitive_and_line_anchored() {
        let text = "Thought: the word Action: appears inline\naction: lower\nFinal Answer: ok";
        assert_eq!(
            parse_react_step(text).unwrap(),
            ParsedStep::Final {
                thought: "the word Action: appears inline\naction: lower".into(),
                answer: "ok".into()
            }
        );
    }

    #[test]
    fn canonical_rendering() {
        assert_eq!(
            render_react_step(&step("a", "B", "{}")),
            "Thought: a\nAction: B\nAction Input: {}"
        );
        assert_eq!(
            render_react_step(&ParsedStep::Final {
                thought: "a".into(),
                answer: "done".into()
            }),
            "Thought: a\nFinal Answer: done"
        );
    }

    #[test]
    fn empty_action_input_round_trips() {
        let s = step("a", "B", "");
        assert!(s.is_well_formed());
        assert_eq!(parse_react_step(&render_react_step(&s)).unwrap(), s);
    }
}
