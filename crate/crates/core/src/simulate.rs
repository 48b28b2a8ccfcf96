//! Scripted re-enactment of an agent run, with or without interception.
//!
//! Output is JSONL: one `trajectory` record holding the executed run, then
//! one `correction` record per step. Nothing time-dependent is written, so
//! the same scripts always give the same bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::upstream::ScriptFileError;
use crate::engine::{
    AgentScript, AlignedTrajectory, AlignmentEngine, CorrectionBackend, CorrectionPolicy, EngineConfig,
    EngineError, EnvScript, ScriptedAgent, ScriptedEnvironment, ToolCall,
};
use crate::trajectory::{Instruction, ParsedStep, Trajectory};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("{path}: {source}")]
    Script { path: String, source: ScriptFileError },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Instruction, agent replies and environment observations for one run.
#[derive(Debug, Clone)]
pub struct Scripts {
    pub instruction: Instruction,
    pub agent: AgentScript,
    pub env: EnvScript,
}

impl Scripts {
    pub fn load(instruction: &Path, agent: &Path, env: &Path) -> Result<Self, SimulateError> {
        let wrap = |p: &Path| {
            let path = p.display().to_string();
            move |source| SimulateError::Script { path, source }
        };
        let text = std::fs::read_to_string(instruction)
            .map_err(|e| wrap(instruction)(ScriptFileError::Io(e)))?;
        let instruction_value: Instruction =
            serde_json::from_str(&text).map_err(|e| wrap(instruction)(ScriptFileError::Parse(e)))?;
        Ok(Self {
            instruction: instruction_value,
            agent: AgentScript::from_file(agent).map_err(wrap(agent))?,
            env: EnvScript::from_file(env).map_err(wrap(env))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub schema_version: u32,
    pub record: String,
    pub complete: bool,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub schema_version: u32,
    pub record: String,
    pub step: usize,
    pub original_thought: String,
    pub aligned_thought: String,
    pub changed: bool,
    /// Absent when the run had no correction backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<CorrectionPolicy>,
    pub original_action: String,
    pub executed_action: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub trajectory: TrajectoryRecord,
    pub corrections: Vec<CorrectionRecord>,
    /// Every tool call the environment received, in order.
    pub tool_calls: Vec<ToolCall>,
}

impl Simulation {
    pub fn changed_steps(&self) -> usize {
        self.corrections.iter().filter(|c| c.changed).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.trajectory).expect("serializable");
        out.push('\n');
        for c in &self.corrections {
            out.push_str(&serde_json::to_string(c).expect("serializable"));
            out.push('\n');
        }
        out
    }

    /// Human-readable per-step summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.corrections {
            let mark = if c.changed { "changed" } else { "kept" };
            out.push_str(&format!("step {} [{mark}] {}\n", c.step, c.original_thought));
            if c.changed {
                out.push_str(&format!("  -> {}\n", c.aligned_thought));
            }
            if c.original_action != c.executed_action {
                out.push_str(&format!("  action {} -> {}\n", c.original_action, c.executed_action));
            }
        }
        out.push_str(&format!(
            "{} steps, {} changed, {}\n",
            self.corrections.len(),
            self.changed_steps(),
            if self.trajectory.complete { "finished" } else { "step budget exhausted" }
        ));
        out
    }
}

fn action_label(step: &ParsedStep) -> String {
    match step {
        ParsedStep::Step { action, .. } => action.clone(),
        ParsedStep::Final { .. } => "Final Answer".into(),
    }
}

fn from_aligned(run: AlignedTrajectory, tool_calls: Vec<ToolCall>) -> Simulation {
    let corrections = run
        .steps
        .iter()
        .map(|s| CorrectionRecord {
            schema_version: crate::SCHEMA_VERSION,
            record: "correction".into(),
            step: s.index,
            original_thought: s.correction.original.clone(),
            aligned_thought: s.correction.aligned.clone(),
            changed: s.correction.changed,
            policy: Some(s.correction.policy),
            original_action: action_label(&s.original),
            executed_action: action_label(&s.step),
        })
        .collect();
    Simulation {
        trajectory: TrajectoryRecord {
            schema_version: crate::SCHEMA_VERSION,
            record: "trajectory".into(),
            complete: run.complete,
            trajectory: run.to_trajectory(),
        },
        corrections,
        tool_calls,
    }
}

fn from_unaligned(t: Trajectory, tool_calls: Vec<ToolCall>) -> Simulation {
    let mut corrections: Vec<CorrectionRecord> = t
        .steps
        .iter()
        .map(|s| CorrectionRecord {
            schema_version: crate::SCHEMA_VERSION,
            record: "correction".into(),
            step: s.index,
            original_thought: s.thought.clone(),
            aligned_thought: s.thought.clone(),
            changed: false,
            policy: None,
            original_action: s.action.clone(),
            executed_action: s.action.clone(),
        })
        .collect();
    if let Some(thought) = &t.final_thought {
        corrections.push(CorrectionRecord {
            schema_version: crate::SCHEMA_VERSION,
            record: "correction".into(),
            step: t.steps.len(),
            original_thought: thought.clone(),
            aligned_thought: thought.clone(),
            changed: false,
            policy: None,
            original_action: "Final Answer".into(),
            executed_action: "Final Answer".into(),
        });
    }
    Simulation {
        trajectory: TrajectoryRecord {
            schema_version: crate::SCHEMA_VERSION,
            record: "trajectory".into(),
            complete: t.final_answer.is_some(),
            trajectory: t,
        },
        corrections,
        tool_calls,
    }
}

/// Replay the scripts. With `backend = None` no thought is intercepted.
///
/// Running out of steps is not an error here: the partial run is returned
/// with `complete == false`.
pub async fn simulate(
    scripts: &Scripts,
    backend: Option<&dyn CorrectionBackend>,
    max_steps: usize,
    config: EngineConfig,
) -> Result<Simulation, SimulateError> {
    let engine = AlignmentEngine::new(config);
    let agent = ScriptedAgent::new(scripts.agent.clone());
    let mut env = ScriptedEnvironment::new(scripts.env.clone());
    match backend {
        Some(backend) => {
            let run = match engine
                .run_aligned_loop(&scripts.instruction, &agent, &mut env, backend, max_steps)
                .await
            {
                Ok(run) => run,
                Err(EngineError::StepBudgetExhausted { partial, .. }) => *partial,
                Err(e) => return Err(e.into()),
            };
            Ok(from_aligned(run, env.call_log().to_vec()))
        }
        None => {
            let t = engine
                .run_unaligned_loop(&scripts.instruction, &agent, &mut env, max_steps)
                .await?;
            Ok(from_unaligned(t, env.call_log().to_vec()))
        }
    }
}
