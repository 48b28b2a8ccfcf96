//! Thought interception and action regeneration.
//!
//! For every step the agent proposes, the engine
//!
//! 1. builds the tagged context from the session's instruction, the
//!    `(thought, observation)` history and the candidate thought, and asks
//!    the [`CorrectionBackend`] for an aligned thought;
//! 2. places the aligned thought in the agent's context (instruction plus
//!    every prior thought, action and observation) and has the
//!    [`UpstreamModel`] produce the action from it;
//! 3. only then lets the action reach the [`ToolEnvironment`].
//!
//! Every thought goes through the backend. There is no pre-classification
//! of safe and unsafe thoughts; a backend that considers a thought fine
//! simply returns it unchanged.

pub mod backend;
pub mod environment;
pub mod upstream;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::chat::ChatMessage;
use crate::session::{SessionError, SessionId, SessionStore};
use crate::trajectory::{
    parse_react_step, render_react_step, serialize_aligner_context, thoughts_equivalent,
    AlignerContext, ContextError, EscapePolicy, Instruction, ParseError, ParsedStep, ThoughtStep,
    Trajectory,
};

pub use backend::{
    BackendError, CorrectionBackend, CorrectionRequest, IdentityBackend, RecordingBackend,
    RemoteBackend, Rewrite, Rule, RuleBackend,
};
pub use environment::{EnvEntry, EnvScript, EnvironmentError, ScriptedEnvironment, ToolCall, ToolEnvironment};
pub use upstream::{
    AgentScript, HttpUpstream, ScriptedAgent, ScriptedTurn, UpstreamError, UpstreamModel,
    REGENERATION_CUE,
};

/// System prompt used when the engine drives an agent itself.
pub const REACT_SYSTEM_PROMPT: &str = "You are an agent that solves tasks with tools. \
Respond in this format:\n\
Thought: your reasoning about what to do next\n\
Action: the tool to use\n\
Action Input: the tool arguments\n\
When the task is finished respond with:\n\
Thought: your reasoning\n\
Final Answer: the answer for the user";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Pass the original thought through and keep going.
    #[default]
    FailOpen,
    /// Abort the step.
    FailClosed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub failure_policy: FailurePolicy,
    #[serde(with = "duration_ms")]
    pub backend_deadline: Duration,
    #[serde(with = "duration_ms")]
    pub upstream_deadline: Duration,
    /// Extra attempts after an unparseable upstream reply.
    pub malformed_retries: u32,
    /// Reuse the already generated action when the aligned thought is
    /// equivalent to the original.
    pub skip_on_unchanged: bool,
    /// Character budget for the serialized correction context.
    pub history_char_budget: usize,
    pub escape: EscapePolicy,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            failure_policy: FailurePolicy::FailOpen,
            backend_deadline: Duration::from_secs(2),
            upstream_deadline: Duration::from_secs(60),
            malformed_retries: 1,
            skip_on_unchanged: true,
            history_char_budget: 32_000,
            escape: EscapePolicy::Escape,
        }
    }
}

impl EngineConfig {
    pub fn loop_deadline(&self, max_steps: usize) -> Duration {
        let per_step = self.backend_deadline.saturating_add(self.upstream_deadline);
        per_step.saturating_mul(u32::try_from(max_steps).unwrap_or(u32::MAX))
    }
}

pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionPolicy {
    /// The backend answered with a thought that differs from the original.
    Corrected,
    /// The backend could not be used; the original thought passed through.
    FailOpenOriginal,
    /// The backend answered with an equivalent thought.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub original: String,
    pub aligned: String,
    pub changed: bool,
    #[serde(rename = "backend_latency_ms", with = "duration_ms")]
    pub backend_latency: Duration,
    pub policy: CorrectionPolicy,
}

impl CorrectionResult {
    fn from_backend(original: &str, aligned: String, latency: Duration) -> Self {
        let changed = !thoughts_equivalent(original, &aligned);
        Self {
            original: original.to_string(),
            aligned,
            changed,
            backend_latency: latency,
            policy: if changed {
                CorrectionPolicy::Corrected
            } else {
                CorrectionPolicy::Identity
            },
        }
    }

    fn fail_open(original: &str, latency: Duration) -> Self {
        Self {
            original: original.to_string(),
            aligned: original.to_string(),
            changed: false,
            backend_latency: latency,
            policy: CorrectionPolicy::FailOpenOriginal,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("candidate thought is empty")]
    EmptyCandidate,
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("correction failed: {0}")]
    BackendFailure(BackendError),
    #[error("upstream failed: {0}")]
    UpstreamFailure(#[from] UpstreamError),
    #[error("upstream reply could not be parsed after {attempts} attempts: {error}")]
    Malformed { attempts: u32, error: ParseError },
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    #[error("step budget of {max_steps} exhausted before a final answer")]
    StepBudgetExhausted {
        max_steps: usize,
        partial: Box<AlignedTrajectory>,
    },
    #[error("loop exceeded its overall deadline of {0:?}")]
    LoopDeadline(Duration),
    #[error("max_steps must be at least 1")]
    ZeroStepBudget,
}

/// Outcome of asking the upstream to act on an aligned thought.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regeneration {
    /// The step to execute; its thought is always the aligned thought.
    pub step: ParsedStep,
    pub upstream_calls: u32,
    /// True when the original action was reused without an upstream call.
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedStep {
    pub index: usize,
    /// What the agent produced before interception.
    pub original: ParsedStep,
    pub correction: CorrectionResult,
    /// What was actually executed or answered.
    pub step: ParsedStep,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    pub upstream_calls: u32,
    pub reused_action: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedTrajectory {
    pub instruction: Instruction,
    pub steps: Vec<AlignedStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    pub complete: bool,
}

impl AlignedTrajectory {
    /// The executed run as a plain trajectory: aligned thoughts, the actions
    /// that actually ran, their observations.
    pub fn to_trajectory(&self) -> Trajectory {
        let mut t = Trajectory::new(self.instruction.clone());
        for s in &self.steps {
            match &s.step {
                ParsedStep::Step {
                    thought,
                    action,
                    action_input,
                } => {
                    let mut ts = ThoughtStep::new(s.index, thought, action, action_input);
                    ts.observation = s.observation.clone();
                    t.steps.push(ts);
                }
                ParsedStep::Final { thought, answer } => {
                    t.final_thought = Some(thought.clone());
                    t.final_answer = Some(answer.clone());
                }
            }
        }
        t
    }

    pub fn changed_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.correction.changed).count()
    }
}

pub struct AlignmentEngine {
    store: Arc<SessionStore>,
    config: EngineConfig,
    loop_counter: AtomicU64,
}

impl AlignmentEngine {
    pub fn new(config: EngineConfig) -> Self {
        Self::with_store(Arc::new(SessionStore::new()), config)
    }

    pub fn with_store(store: Arc<SessionStore>, config: EngineConfig) -> Self {
        Self {
            store,
            config,
            loop_counter: AtomicU64::new(0),
        }
    }

    pub fn store(&self) -> &Arc<SessionStore> {
        &self.store
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Context for correcting `candidate`, truncated to the character budget.
    pub fn aligner_context(
        &self,
        id: &SessionId,
        candidate: &str,
    ) -> Result<AlignerContext, EngineError> {
        let state = self.store.get(id)?;
        let history = state.trajectory.history();
        let mut ctx = AlignerContext::new(state.trajectory.instruction, history, candidate);
        let dropped = ctx.truncate_to_budget(self.config.history_char_budget, self.config.escape);
        if dropped > 0 {
            tracing::debug!(session = %id, dropped, "history truncated to fit budget");
        }
        Ok(ctx)
    }

    pub async fn align_thought(
        &self,
        id: &SessionId,
        candidate: &str,
        backend: &dyn CorrectionBackend,
    ) -> Result<CorrectionResult, EngineError> {
        if candidate.trim().is_empty() {
            return Err(EngineError::EmptyCandidate);
        }
        let ctx = self.aligner_context(id, candidate)?;
        let prompt = serialize_aligner_context(&ctx, self.config.escape)?;
        let request = CorrectionRequest {
            prompt,
            candidate: candidate.to_string(),
        };
        let deadline = self.config.backend_deadline;
        let started = Instant::now();
        let outcome = match tokio::time::timeout(deadline, backend.correct(&request, deadline)).await {
            Ok(Ok(text)) if text.trim().is_empty() => Err(BackendError::EmptyResponse),
            Ok(Ok(text)) => Ok(text.trim().to_string()),
            Ok(Err(e)) => Err(e),
            Err(_) => Err(BackendError::Timeout),
        };
        let latency = started.elapsed();
        match outcome {
            Ok(aligned) => Ok(CorrectionResult::from_backend(candidate, aligned, latency)),
            Err(e) => match self.config.failure_policy {
                FailurePolicy::FailOpen => {
                    warn!(session = %id, backend = backend.name(), error = %e, "correction failed, passing original thought through");
                    Ok(CorrectionResult::fail_open(candidate, latency))
                }
                FailurePolicy::FailClosed => Err(EngineError::BackendFailure(e)),
            },
        }
    }

    /// The agent's context for the session: the stored preamble (or just the
    /// instruction) followed by every observed step in ReAct form.
    pub fn session_messages(&self, id: &SessionId) -> Result<Vec<ChatMessage>, EngineError> {
        let state = self.store.get(id)?;
        let mut messages = if state.context.is_empty() {
            vec![ChatMessage::user(state.trajectory.instruction.text.clone())]
        } else {
            state.context.clone()
        };
        for step in &state.trajectory.steps {
            let Some(obs) = &step.observation else { break };
            messages.push(ChatMessage::assistant(render_react_step(&ParsedStep::Step {
                thought: step.thought.clone(),
                action: step.action.clone(),
                action_input: step.action_input.clone(),
            })));
            messages.push(ChatMessage::user(format!("Observation: {obs}")));
        }
        Ok(messages)
    }

    pub async fn regenerate_action(
        &self,
        id: &SessionId,
        original: &ParsedStep,
        correction: &CorrectionResult,
        upstream: &dyn UpstreamModel,
    ) -> Result<Regeneration, EngineError> {
        let base = self.session_messages(id)?;
        self.regenerate_from_messages(base, original, correction, upstream)
            .await
    }

    /// Like [`regenerate_action`](Self::regenerate_action) but with the
    /// agent context supplied directly, as the gateway does with the
    /// messages of the intercepted request.
    pub async fn regenerate_from_messages(
        &self,
        base: Vec<ChatMessage>,
        original: &ParsedStep,
        correction: &CorrectionResult,
        upstream: &dyn UpstreamModel,
    ) -> Result<Regeneration, EngineError> {
        let aligned = correction.aligned.as_str();
        if aligned.trim().is_empty() {
            return Err(EngineError::EmptyCandidate);
        }
        if self.config.skip_on_unchanged && !correction.changed {
            let mut step = original.clone();
            step.set_thought(aligned);
            return Ok(Regeneration {
                step,
                upstream_calls: 0,
                reused: true,
            });
        }
        let mut messages = base;
        messages.push(ChatMessage::assistant(format!("Thought: {aligned}")));
        messages.push(ChatMessage::user(REGENERATION_CUE));
        let (mut step, calls) = self.complete_and_parse(&messages, upstream, true).await?;
        step.set_thought(aligned);
        Ok(Regeneration {
            step,
            upstream_calls: calls,
            reused: false,
        })
    }

    async fn complete_and_parse(
        &self,
        messages: &[ChatMessage],
        upstream: &dyn UpstreamModel,
        continuation: bool,
    ) -> Result<(ParsedStep, u32), EngineError> {
        let deadline = self.config.upstream_deadline;
        let attempts = self.config.malformed_retries + 1;
        let mut last_error = ParseError::MissingThought;
        for attempt in 1..=attempts {
            let reply = match tokio::time::timeout(deadline, upstream.complete(messages, deadline)).await {
                Ok(r) => r?,
                Err(_) => return Err(UpstreamError::Timeout.into()),
            };
            match parse_reply(&reply, continuation) {
                Ok(step) => return Ok((step, attempt)),
                Err(e) => {
                    warn!(attempt, error = %e, "unparseable upstream reply");
                    last_error = e;
                }
            }
        }
        Err(EngineError::Malformed {
            attempts,
            error: last_error,
        })
    }

    fn open_loop_session(
        &self,
        instruction: &Instruction,
    ) -> Result<SessionId, EngineError> {
        let n = self.loop_counter.fetch_add(1, Ordering::Relaxed);
        let id = SessionId::new(format!("loop-{}-{n}", instruction.id))?;
        self.store.create_session(id.clone(), instruction.clone())?;
        self.store.with_session(&id, |s| {
            s.context = vec![
                ChatMessage::system(REACT_SYSTEM_PROMPT),
                ChatMessage::user(instruction.text.clone()),
            ];
        })?;
        Ok(id)
    }

    /// Drive an agent to completion with every thought intercepted before
    /// its action runs.
    pub async fn run_aligned_loop(
        &self,
        instruction: &Instruction,
        agent: &dyn UpstreamModel,
        env: &mut dyn ToolEnvironment,
        backend: &dyn CorrectionBackend,
        max_steps: usize,
    ) -> Result<AlignedTrajectory, EngineError> {
        if max_steps == 0 {
            return Err(EngineError::ZeroStepBudget);
        }
        let id = self.open_loop_session(instruction)?;
        let deadline = self.config.loop_deadline(max_steps);
        let result = tokio::time::timeout(
            deadline,
            self.aligned_loop_inner(&id, instruction, agent, env, backend, max_steps),
        )
        .await
        .unwrap_or(Err(EngineError::LoopDeadline(deadline)));
        self.store.remove(&id);
        result
    }

    async fn aligned_loop_inner(
        &self,
        id: &SessionId,
        instruction: &Instruction,
        agent: &dyn UpstreamModel,
        env: &mut dyn ToolEnvironment,
        backend: &dyn CorrectionBackend,
        max_steps: usize,
    ) -> Result<AlignedTrajectory, EngineError> {
        let mut out = AlignedTrajectory {
            instruction: instruction.clone(),
            steps: Vec::new(),
            final_answer: None,
            complete: false,
        };
        for index in 0..max_steps {
            let messages = self.session_messages(id)?;
            let (original, first_calls) = self.complete_and_parse(&messages, agent, false).await?;
            let correction = self.align_thought(id, original.thought(), backend).await?;
            let regen = self
                .regenerate_from_messages(messages, &original, &correction, agent)
                .await?;
            let mut aligned = AlignedStep {
                index,
                original,
                correction,
                step: regen.step.clone(),
                observation: None,
                upstream_calls: first_calls + regen.upstream_calls,
                reused_action: regen.reused,
            };
            match regen.step {
                ParsedStep::Final { thought, answer } => {
                    self.store.set_final_answer(id, &thought, &answer)?;
                    out.final_answer = Some(answer);
                    out.complete = true;
                    out.steps.push(aligned);
                    return Ok(out);
                }
                ParsedStep::Step {
                    thought,
                    action,
                    action_input,
                } => {
                    let call = ToolCall {
                        step: index,
                        action: action.clone(),
                        action_input: action_input.clone(),
                        thought: thought.clone(),
                    };
                    let observation = env.execute(&call)?;
                    self.store.append_step(
                        id,
                        ThoughtStep::new(index, thought, action, action_input)
                            .observed(observation.clone()),
                    )?;
                    aligned.observation = Some(observation);
                    out.steps.push(aligned);
                }
            }
        }
        Err(EngineError::StepBudgetExhausted {
            max_steps,
            partial: Box::new(out),
        })
    }

    /// The same agent and environment with no interception, for comparison.
    pub async fn run_unaligned_loop(
        &self,
        instruction: &Instruction,
        agent: &dyn UpstreamModel,
        env: &mut dyn ToolEnvironment,
        max_steps: usize,
    ) -> Result<Trajectory, EngineError> {
        if max_steps == 0 {
            return Err(EngineError::ZeroStepBudget);
        }
        let id = self.open_loop_session(instruction)?;
        let result = async {
            for index in 0..max_steps {
                let messages = self.session_messages(&id)?;
                let (step, _) = self.complete_and_parse(&messages, agent, false).await?;
                match step {
                    ParsedStep::Final { thought, answer } => {
                        self.store.set_final_answer(&id, thought, answer)?;
                        return Ok(self.store.get(&id)?.trajectory);
                    }
                    ParsedStep::Step {
                        thought,
                        action,
                        action_input,
                    } => {
                        let call = ToolCall {
                            step: index,
                            action: action.clone(),
                            action_input: action_input.clone(),
                            thought: thought.clone(),
                        };
                        let observation = env.execute(&call)?;
                        self.store.append_step(
                            &id,
                            ThoughtStep::new(index, thought, action, action_input)
                                .observed(observation),
                        )?;
                    }
                }
            }
            Ok(self.store.get(&id)?.trajectory)
        }
        .await;
        self.store.remove(&id);
        result
    }
}

/// Parse an upstream reply. A continuation reply may omit the thought since
/// the aligned thought replaces it anyway.
fn parse_reply(reply: &str, continuation: bool) -> Result<ParsedStep, ParseError> {
    match parse_react_step(reply) {
        Err(ParseError::MissingThought) if continuation => {
            parse_react_step(&format!("Thought: (aligned)\n{reply}"))
        }
        other => other,
    }
}
