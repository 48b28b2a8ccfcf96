//! Randomized scripted agent loops and the interception checks run over them.

use aligner_gate::chat::Role;
use aligner_gate::engine::{
    AgentScript, AlignedTrajectory, AlignmentEngine, CorrectionBackend, EngineConfig, EnvEntry,
    EnvScript, IdentityBackend, RecordingBackend, Rewrite, Rule, RuleBackend, ScriptedAgent,
    ScriptedEnvironment, ScriptedTurn, ToolCall,
};
use aligner_gate::trajectory::Instruction;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MARK: &str = "UNSAFE-MARK";

const WORDS: [&str; 10] = ["inbox", "ledger", "backup", "Zoë", "東京", "quota", "draft", "token", "invoice", "folder"];

pub struct RandomLoop {
    pub seed: u64,
    pub instruction: Instruction,
    pub script: AgentScript,
    pub env: EnvScript,
    pub risky_steps: Vec<usize>,
    pub use_rules: bool,
}

pub fn rules() -> RuleBackend {
    RuleBackend::new(vec![Rule {
        trigger: MARK.into(),
        rewrite: Rewrite::ReplacePhrase("after checking with the user".into()),
    }])
}

pub fn random_loop(seed: u64) -> RandomLoop {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut below = |n: u64| (rng.next_u64() % n) as usize;
    let steps = 1 + below(8);
    let use_rules = below(5) != 0;
    let mut turns = Vec::new();
    let mut entries = Vec::new();
    let mut risky_steps = Vec::new();
    for i in 0..steps {
        let word = WORDS[below(WORDS.len() as u64)];
        let risky = below(2) == 0;
        let thought = if risky {
            risky_steps.push(i);
            format!("Step {i}: I will touch the {word} {MARK} right now.")
        } else {
            format!("Step {i}: Look at the {word} first.")
        };
        let (action, regenerated) = if risky && use_rules {
            (format!("Raw{i}"), Some(format!("Action: Safe{i}\nAction Input: {{\"step\": {i}}}")))
        } else if risky {
            (format!("Raw{i}"), None)
        } else {
            (format!("Tool{i}"), None)
        };
        turns.push(ScriptedTurn {
            reply: format!("Thought: {thought}\nAction: {action}\nAction Input: {{\"step\": {i}}}"),
            regenerated,
        });
        let executed = if risky && use_rules { format!("Safe{i}") } else { action };
        entries.push(EnvEntry {
            action: executed,
            observation: format!("result {i} for the {word}"),
        });
    }
    turns.push(ScriptedTurn {
        reply: "Thought: Everything is handled.\nFinal Answer: Done.".into(),
        regenerated: None,
    });
    RandomLoop {
        seed,
        instruction: Instruction::new(format!("r{seed}"), format!("Randomized task {seed}")).unwrap(),
        script: AgentScript {
            schema_version: 1,
            steps: turns,
        },
        env: EnvScript {
            schema_version: 1,
            entries,
        },
        risky_steps,
        use_rules,
    }
}

pub struct LoopOutcome {
    pub trajectory: AlignedTrajectory,
    pub env_log: Vec<ToolCall>,
    pub violations: Vec<String>,
}

/// Run one loop and list every call that did not come from an aligned context.
pub async fn run_and_check(l: &RandomLoop) -> LoopOutcome {
    let engine = AlignmentEngine::new(EngineConfig::default());
    let agent = ScriptedAgent::new(l.script.clone());
    let mut env = ScriptedEnvironment::new(l.env.clone());
    let inner: std::sync::Arc<dyn CorrectionBackend> = if l.use_rules {
        std::sync::Arc::new(rules())
    } else {
        std::sync::Arc::new(IdentityBackend)
    };
    let backend = RecordingBackend::new(inner);
    let trajectory = engine
        .run_aligned_loop(&l.instruction, &agent, &mut env, &backend, 20)
        .await
        .unwrap_or_else(|e| panic!("seed {}: {e}", l.seed));
    let env_log = env.call_log().to_vec();
    let requests = backend.requests();
    let expect = |candidate: &str| if l.use_rules { rules().rewrite(candidate) } else { candidate.to_string() };

    let mut v = Vec::new();
    if requests.len() != l.script.steps.len() {
        v.push(format!("{} backend requests for {} steps", requests.len(), l.script.steps.len()));
    }
    for (i, call) in env_log.iter().enumerate() {
        let Some(req) = requests.get(i) else { break };
        if call.thought != expect(&req.candidate) {
            v.push(format!("call {i} ran with thought {:?} not the aligned one", call.thought));
        }
        if l.use_rules && call.thought.contains(MARK) {
            v.push(format!("call {i} carries an uncorrected thought"));
        }
        if l.use_rules && call.action.starts_with("Raw") {
            v.push(format!("call {i} executed original action {}", call.action));
        }
    }
    // Aligned thoughts feed the next step's backend context, originals never do.
    let mut aligned_so_far: Vec<String> = Vec::new();
    for (i, req) in requests.iter().enumerate() {
        for a in &aligned_so_far {
            if !req.prompt.contains(&format!("<thought>{a}</thought>")) {
                v.push(format!("step {i} context lacks earlier aligned thought {a:?}"));
            }
        }
        if l.use_rules && req.prompt.matches(MARK).count() != req.candidate.matches(MARK).count() {
            v.push(format!("step {i} context holds an unaligned earlier thought"));
        }
        aligned_so_far.push(expect(&req.candidate));
    }
    for (n, call) in agent.calls().iter().enumerate() {
        let history = if call.regeneration {
            // The last two messages are the aligned thought and the cue.
            let m = &call.messages[call.messages.len() - 2];
            if m.role != Role::Assistant || !m.content.starts_with("Thought: ") || (l.use_rules && m.content.contains(MARK)) {
                v.push(format!("agent call {n} regenerated from {:?}", m.content));
            }
            &call.messages[..call.messages.len() - 2]
        } else {
            &call.messages[..]
        };
        if l.use_rules && history.iter().any(|m| m.content.contains(MARK)) {
            v.push(format!("agent call {n} saw an unaligned thought in its history"));
        }
    }
    LoopOutcome {
        trajectory,
        env_log,
        violations: v,
    }
}
