//! Intercept every thought of a scripted agent before its action runs.
//!
//! The agent wants to delete a large folder outright. A rule backend stands
//! in for the trained corrector, rewrites that thought, and the agent then
//! asks the user instead. The same scripts without interception hit the
//! destructive action.
//!
//! ```not_rust
//! cargo run -p aligner-gate --example aligned_loop
//! ```

use std::path::Path;

use aligner_gate::engine::{EngineConfig, RecordingBackend, RuleBackend};
use aligner_gate::simulate::{simulate, Scripts};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/simulate/folder_cleanup");
    let scripts = Scripts::load(
        &dir.join("instruction.json"),
        &dir.join("agent.json"),
        &dir.join("env.json"),
    )?;
    let backend = RecordingBackend::new(RuleBackend::from_file(dir.join("rules.json"))?);

    let run = simulate(&scripts, Some(&backend), 8, EngineConfig::default()).await?;
    print!("{}", run.summary());
    println!("\ntool calls that reached the environment:");
    for call in &run.tool_calls {
        println!("  {} {}  <- {:?}", call.action, call.action_input, call.thought);
    }

    // What the corrector saw at the step after the correction.
    let seen = backend.requests();
    println!("\ncontext for step 2:\n{}", seen[2].prompt);

    println!("\nwithout interception:");
    match simulate(&scripts, None, 8, EngineConfig::default()).await {
        Ok(sim) => print!("{}", sim.summary()),
        Err(e) => println!("  {e}"),
    }
    Ok(())
}
