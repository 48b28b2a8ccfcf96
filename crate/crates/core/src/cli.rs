//! The `aligner-gate` command line.
//!
//! ```text
//! aligner-gate serve [--listen ADDR]
//! aligner-gate dataset generate --n N --seed S --out corpus.jsonl
//! aligner-gate dataset extract  --in corpus.jsonl --out pairs.jsonl
//! aligner-gate dataset split    --in pairs.jsonl --n 1000 --seed 42 --out DIR
//! aligner-gate dataset validate --in pairs.jsonl [--budget CHARS]
//! aligner-gate dataset export   --in pairs.jsonl --out train.jsonl [--kind core]
//! aligner-gate eval report --benchmark toolemu --in records.jsonl --out report.json [--audit audit.jsonl]
//! aligner-gate simulate --instruction i.json --agent a.json --env e.json --backend rule:r.json --out run.jsonl
//! aligner-gate measure-overhead --n 1000
//! ```
//!
//! Exit status is 0 on success, 2 on usage errors and bind failures, 1 on
//! anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use tracing::info;

use crate::dataset::{self, PairKind, SplitSpec};
use crate::engine::CorrectionBackend;
use crate::eval::{self, Benchmark, EvalRecord};
use crate::gateway::{self, Gateway, GatewayConfig, GatewayError};
use crate::jsonl::read_jsonl;
use crate::simulate::{simulate, Scripts};

#[derive(Debug, Parser)]
#[command(name = "aligner-gate", version, about = "Thought interception sidecar for ReAct agents")]
pub struct Cli {
    /// TOML config file; ALIGNER_GATE_* variables override it.
    #[arg(long, global = true, env = "ALIGNER_GATE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the gateway until SIGINT or SIGTERM.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
    /// Build, split, check and export fine-tuning pairs.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Aggregate judged benchmark records.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Replay scripted agent and environment files through the loop.
    Simulate(SimulateArgs),
    /// Time gateway-added latency against instant in-process mocks.
    MeasureOverhead {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Write a synthetic annotated corpus.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Annotated trajectories to training pairs.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded validation split of the core pairs. Writes validation.jsonl,
    /// train.jsonl and warmup.jsonl into the output directory.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report structural problems; exits 1 if any error is found.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Validate, optionally filter by kind, and write the training file.
    Export {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<PairKind>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Print every metric for one benchmark's records as JSON.
    Report {
        #[arg(long, value_parser = parse_benchmark)]
        benchmark: Benchmark,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Gateway audit log to join correction statistics from.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub instruction: PathBuf,
    #[arg(long)]
    pub agent: PathBuf,
    #[arg(long)]
    pub env: PathBuf,
    /// identity, remote, rule:<file>, or none for an unintercepted run.
    #[arg(long, default_value = "identity")]
    pub backend: String,
    #[arg(long, default_value_t = 10)]
    pub max_steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<PairKind, String> {
    match s {
        "warmup" => Ok(PairKind::Warmup),
        "core" => Ok(PairKind::Core),
        _ => Err(format!("expected warmup or core, got {s:?}")),
    }
}

fn parse_benchmark(s: &str) -> Result<Benchmark, String> {
    s.parse()
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn write_out(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::from(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_logging(cli.verbose);
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: starting runtime: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

async fn dispatch(cli: Cli) -> CmdResult {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Serve { listen } => serve(config_path, listen).await,
        Command::Dataset(cmd) => dataset_cmd(cmd),
        Command::Eval(EvalCommand::Report {
            benchmark,
            input,
            out,
            audit,
        }) => eval_report(benchmark, &input, out.as_deref(), audit.as_deref()),
        Command::Simulate(args) => simulate_cmd(config_path, args).await,
        Command::MeasureOverhead { n, out } => {
            let report = gateway::measure_overhead(n).await?;
            write_out(out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&report)?))
        }
    }
}

async fn serve(config_path: Option<&Path>, listen: Option<String>) -> CmdResult {
    let mut config = GatewayConfig::load(config_path)?;
    if let Some(addr) = listen {
        config.listen_address = addr;
        config.validate()?;
    }
    let gateway = Arc::new(Gateway::from_config(config.clone())?);
    let listener = gateway::bind(&config.listen_address).await.map_err(|e| match e {
        GatewayError::Bind { .. } => Failure {
            code: 2,
            message: e.to_string(),
        },
        other => other.into(),
    })?;
    let addr = listener.local_addr()?;
    info!(%addr, upstream = %config.upstream_base_url, backend = %config.backend, "gateway listening");
    eprintln!("listening on {addr}");
    gateway::serve_with_shutdown(gateway, listener, gateway::shutdown_signal()).await?;
    Ok(())
}

fn dataset_cmd(cmd: DatasetCommand) -> CmdResult {
    match cmd {
        DatasetCommand::Generate { n, seed, out } => {
            let corpus = dataset::synthetic::generate_corpus(seed, n);
            let written = dataset::write_corpus(&corpus, &out)?;
            eprintln!("wrote {written} trajectories to {}", out.display());
        }
        DatasetCommand::Extract { input, out } => {
            let corpus = dataset::read_corpus(&input)?;
            let pairs = dataset::extract_corpus(&corpus)?;
            let counts = dataset::PairCounts::of(&pairs);
            dataset::export_jsonl(&pairs, &out)?;
            eprintln!(
                "{} trajectories -> {} warmup + {} core pairs",
                corpus.len(),
                counts.warmup,
                counts.core
            );
        }
        DatasetCommand::Split { input, n, seed, out } => {
            let pairs = dataset::import_jsonl(&input)?;
            let (core, warmup): (Vec<_>, Vec<_>) = pairs.into_iter().partition(|p| p.kind == PairKind::Core);
            let (validation, train) = dataset::split_validation(
                &core,
                SplitSpec {
                    validation_count: n,
                    seed,
                },
            )?;
            std::fs::create_dir_all(&out)?;
            dataset::export_jsonl(&validation, out.join("validation.jsonl"))?;
            dataset::export_jsonl(&train, out.join("train.jsonl"))?;
            dataset::export_jsonl(&warmup, out.join("warmup.jsonl"))?;
            eprintln!(
                "{} validation, {} train, {} warmup",
                validation.len(),
                train.len(),
                warmup.len()
            );
        }
        DatasetCommand::Validate { input, budget } => {
            let pairs = dataset::import_jsonl(&input)?;
            let report = match budget {
                Some(b) => dataset::validate_dataset_with(&pairs, b),
                None => dataset::validate_dataset(&pairs),
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.is_ok() {
                return Err(format!("{} errors", report.errors.len()).into());
            }
        }
        DatasetCommand::Export { input, out, kind } => {
            let pairs = dataset::import_jsonl(&input)?;
            let report = dataset::validate_dataset(&pairs);
            if !report.is_ok() {
                return Err(format!(
                    "refusing to export: {} validation errors (run `dataset validate`)",
                    report.errors.len()
                )
                .into());
            }
            let selected: Vec<_> = pairs
                .into_iter()
                .filter(|p| kind.is_none_or(|k| p.kind == k))
                .collect();
            let n = dataset::export_jsonl(&selected, &out)?;
            eprintln!("exported {n} pairs to {}", out.display());
        }
    }
    Ok(())
}

fn eval_report(benchmark: Benchmark, input: &Path, out: Option<&Path>, audit: Option<&Path>) -> CmdResult {
    let records: Vec<EvalRecord> = read_jsonl(input)?;
    if let Some(r) = records.iter().find(|r| r.benchmark != benchmark) {
        return Err(format!("record {} is {}, not {benchmark}", r.case_id, r.benchmark).into());
    }
    let mut report = eval::report(&records)?;
    if let Some(path) = audit {
        report = report.with_corrections(&gateway::audit::read_audit_log(path)?);
    }
    write_out(out, &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    for (k, v) in &report.display {
        eprintln!("{k}: {v}");
    }
    Ok(())
}

async fn simulate_cmd(config_path: Option<&Path>, args: SimulateArgs) -> CmdResult {
    let config = GatewayConfig::load(config_path)?;
    let scripts = Scripts::load(&args.instruction, &args.agent, &args.env)?;
    let backend: Option<Arc<dyn CorrectionBackend>> = match args.backend.as_str() {
        "none" => None,
        sel => Some(gateway::backend_from_selector(
            sel,
            config.aligner_base_url.as_deref(),
            &config.aligner_model,
        )?),
    };
    let sim = simulate(&scripts, backend.as_deref(), args.max_steps, config.engine_config()).await?;
    write_out(args.out.as_deref(), &sim.to_jsonl())?;
    eprint!("{}", sim.summary());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flags_rejected() {
        assert!(Cli::try_parse_from(["aligner-gate", "serve", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["aligner-gate", "dataset", "split", "--in", "x", "--n", "3", "--out", "d"]).is_ok());
        assert!(Cli::try_parse_from(["aligner-gate", "eval", "report", "--benchmark", "nope", "--in", "x"]).is_err());
    }
}
