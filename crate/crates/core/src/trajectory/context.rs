//! Tagged context handed to the correction backend.
//!
//! Layout, byte for byte:
//!
//! ```text
//! <instruction>\n<thought>T0</thought><observation>O0</observation>...\n<candidate>
//! ```
//!
//! With an empty history the tag block disappears and the candidate follows
//! the instruction after a single newline. The history carries thoughts and
//! observations only; actions are not part of it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Instruction;

pub const THOUGHT_OPEN: &str = "<thought>";
pub const THOUGHT_CLOSE: &str = "</thought>";
pub const OBSERVATION_OPEN: &str = "<observation>";
pub const OBSERVATION_CLOSE: &str = "</observation>";

const TAGS: [&str; 4] = [THOUGHT_OPEN, THOUGHT_CLOSE, OBSERVATION_OPEN, OBSERVATION_CLOSE];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContextError {
    #[error("{field} contains a literal context tag and escaping is disabled")]
    UnescapableContent { field: &'static str },
}

/// What to do when a field body contains one of the context tags verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapePolicy {
    /// Replace every `<` in the offending body with `&lt;`.
    #[default]
    Escape,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignerContext {
    pub instruction: Instruction,
    /// `(thought, observation)` pairs ordered by step index.
    pub history: Vec<(String, String)>,
    pub candidate_thought: String,
}

impl AlignerContext {
    pub fn new(
        instruction: Instruction,
        history: Vec<(String, String)>,
        candidate_thought: impl Into<String>,
    ) -> Self {
        Self {
            instruction,
            history,
            candidate_thought: candidate_thought.into(),
        }
    }

    /// Drop the oldest history pairs until the serialized form fits in
    /// `budget` characters. The instruction and candidate are never removed,
    /// so the result may still exceed the budget. Returns the number of
    /// pairs dropped.
    pub fn truncate_to_budget(&mut self, budget: usize, policy: EscapePolicy) -> usize {
        let fixed = self.instruction.text.chars().count() + 1 + self.candidate_thought.chars().count();
        let pair_len = |(t, o): &(String, String)| {
            let esc = |s: &str| match policy {
                EscapePolicy::Escape => escape_body(s).chars().count(),
                EscapePolicy::Reject => s.chars().count(),
            };
            THOUGHT_OPEN.len() + THOUGHT_CLOSE.len() + OBSERVATION_OPEN.len() + OBSERVATION_CLOSE.len()
                + esc(t)
                + esc(o)
        };
        let lens: Vec<usize> = self.history.iter().map(pair_len).collect();
        let mut total = fixed + lens.iter().sum::<usize>() + usize::from(!lens.is_empty());
        let mut dropped = 0;
        while total > budget && dropped < lens.len() {
            total -= lens[dropped];
            dropped += 1;
            if dropped == lens.len() {
                total -= 1;
            }
        }
        self.history.drain(..dropped);
        dropped
    }
}

fn contains_tag(s: &str) -> bool {
    TAGS.iter().any(|tag| s.contains(tag))
}

pub(crate) fn escape_body(s: &str) -> std::borrow::Cow<'_, str> {
    if contains_tag(s) {
        s.replace('<', "&lt;").into()
    } else {
        s.into()
    }
}

fn body<'a>(
    s: &'a str,
    field: &'static str,
    policy: EscapePolicy,
) -> Result<std::borrow::Cow<'a, str>, ContextError> {
    match policy {
        EscapePolicy::Escape => Ok(escape_body(s)),
        EscapePolicy::Reject if contains_tag(s) => Err(ContextError::UnescapableContent { field }),
        EscapePolicy::Reject => Ok(s.into()),
    }
}

/// Render the context in its fixed byte layout.
pub fn serialize_aligner_context(
    ctx: &AlignerContext,
    policy: EscapePolicy,
) -> Result<String, ContextError> {
    let mut out = String::new();
    out.push_str(&body(&ctx.instruction.text, "instruction", policy)?);
    out.push('\n');
    if !ctx.history.is_empty() {
        for (thought, observation) in &ctx.history {
            out.push_str(THOUGHT_OPEN);
            out.push_str(&body(thought, "thought", policy)?);
            out.push_str(THOUGHT_CLOSE);
            out.push_str(OBSERVATION_OPEN);
            out.push_str(&body(observation, "observation", policy)?);
            out.push_str(OBSERVATION_CLOSE);
        }
        out.push('\n');
    }
    out.push_str(&body(&ctx.candidate_thought, "candidate thought", policy)?);
    Ok(out)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TagStructureError {
    #[error("unbalanced tags: {open_thought} <thought> vs {close_thought} </thought>, {open_obs} <observation> vs {close_obs} </observation>")]
    Unbalanced {
        open_thought: usize,
        close_thought: usize,
        open_obs: usize,
        close_obs: usize,
    },
    #[error("tag {found:?} out of order at byte {offset}")]
    OutOfOrder { found: &'static str, offset: usize },
}

/// Check that tags form a sequence of `<thought>..</thought><observation>..</observation>`
/// pairs and return how many pairs there are.
pub fn check_tag_structure(text: &str) -> Result<usize, TagStructureError> {
    let count = |t: &str| text.matches(t).count();
    let (ot, ct, oo, co) = (
        count(THOUGHT_OPEN),
        count(THOUGHT_CLOSE),
        count(OBSERVATION_OPEN),
        count(OBSERVATION_CLOSE),
    );
    if !(ot == ct && ct == oo && oo == co) {
        return Err(TagStructureError::Unbalanced {
            open_thought: ot,
            close_thought: ct,
            open_obs: oo,
            close_obs: co,
        });
    }
    let mut expected = 0usize;
    let mut offset = 0usize;
    while offset < text.len() {
        let rest = &text[offset..];
        let Some(pos) = rest.find('<') else { break };
        let at = offset + pos;
        if let Some(tag) = TAGS.iter().find(|t| text[at..].starts_with(**t)) {
            if *tag != TAGS[expected % 4] {
                return Err(TagStructureError::OutOfOrder { found: tag, offset: at });
            }
            expected += 1;
            offset = at + tag.len();
        } else {
            offset = at + 1;
        }
    }
    Ok(ot)
}
