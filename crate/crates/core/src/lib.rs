//! Thought interception for ReAct agents.
//!
//! `aligner-gate` sits between an agent framework and its model. Every
//! thought the model produces is sent to a correction backend before the
//! action derived from it can run; the action is then regenerated from the
//! corrected context. Around that loop the crate provides the pieces needed
//! to build and measure such a corrector:
//!
//! - [`trajectory`]: ReAct grammar, tagged correction context, thought equivalence
//! - [`session`]: per-run trajectory state for a stateless HTTP front end
//! - [`engine`]: correction, action regeneration and the aligned agent loop
//! - [`gateway`]: chat-completion sidecar with audit log and overhead measurement
//! - [`dataset`]: warm-up and core fine-tuning pairs from annotated trajectories
//! - [`eval`]: safety, helpfulness and leakage metrics over judged records
//! - [`cli`]: the `aligner-gate` command line
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod chat;
pub mod cli;
pub mod dataset;
pub mod engine;
pub mod eval;
pub mod gateway;
pub mod jsonl;
pub(crate) mod rng;
pub mod session;
pub mod simulate;
pub mod trajectory;

/// Version stamped into every machine-readable record this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

pub(crate) fn schema_version() -> u32 {
    SCHEMA_VERSION
}
