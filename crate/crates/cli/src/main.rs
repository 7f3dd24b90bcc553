//! `pipeshard` command-line front-end.
//!
//! Exit codes: 0 when every requested output was written, 1 for an invalid
//! run specification or configuration, 2 when an input cannot be read.

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pipeshard::placement::PlacementMode;
use pipeshard::sim::{BaselineKind, RemoteMode};
use pipeshard::tuner::RetreatRule;

#[derive(Parser)]
#[command(name = "pipeshard", version, about = "Simulate pipelined multi-GPU GNN aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the graph across GPUs and write the partition plan as JSON.
    Partition(PartitionArgs),
    /// Simulate one kernel configuration and write a JSON report.
    Simulate(SimulateArgs),
    /// Search for a kernel configuration and write the tuning trace as CSV.
    Tune(TuneArgs),
    /// Simulate every ablation baseline at one configuration and write a CSV table.
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
struct GraphArgs {
    /// Edge-list text file, or a binary CSR dump when the extension is `.bin`.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    graph: Option<PathBuf>,
    /// Synthetic graph as `kind:N:deg`, e.g. `powerlaw:10000:16`.
    #[arg(long)]
    synthetic: Option<String>,
    /// Seed for synthetic graphs; echoed into every output.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    gpus: usize,
    /// Embedding dimension.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value = "follow-split")]
    placement: PlacementMode,
}

#[derive(Args, Clone)]
struct HwArgs {
    /// Preset name (`a100`, `v100`), profile file, or a name under `$PIPESHARD_PROFILE_DIR`.
    #[arg(long, default_value = "a100")]
    profile: String,
    /// Recalibrate the remote-get latency so remote loads take this share of serial time.
    #[arg(long)]
    remote_share: Option<f64>,
}

#[derive(Args, Clone, Copy)]
struct ConfigArgs {
    #[arg(long, default_value_t = 16)]
    ps: usize,
    #[arg(long, default_value_t = 2)]
    dist: usize,
    #[arg(long, default_value_t = 2)]
    wpb: usize,
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    hw: HwArgs,
    /// Plan JSON destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    hw: HwArgs,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, value_parser = parse_remote_mode, default_value = "async")]
    mode: RemoteMode,
    /// Run an ablation baseline instead of the pipelined schedule; overrides `--mode`.
    #[arg(long)]
    baseline: Option<BaselineKind>,
    /// Event trace CSV destination.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Report JSON destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    hw: HwArgs,
    #[arg(long, value_parser = parse_remote_mode, default_value = "async")]
    mode: RemoteMode,
    /// How `ps` backs off when a larger block hurts.
    #[arg(long, value_parser = parse_retreat, default_value = "latency-rank")]
    retreat: RetreatRule,
    #[arg(long, default_value_t = pipeshard::tuner::DEFAULT_MAX_EVALUATIONS)]
    max_evals: usize,
    /// Trace CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    hw: HwArgs,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Table CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_remote_mode(s: &str) -> Result<RemoteMode, String> {
    match s {
        "sync" => Ok(RemoteMode::Sync),
        "async" => Ok(RemoteMode::Async),
        "phase-separated" | "phase_separated" => Ok(RemoteMode::PhaseSeparated),
        other => Err(format!("unknown mode {other:?} (sync, async, phase-separated)")),
    }
}

fn parse_retreat(s: &str) -> Result<RetreatRule, String> {
    match s {
        "latency-rank" => Ok(RetreatRule::LatencyRank),
        "value-rank" => Ok(RetreatRule::ValueRank),
        other => Err(format!("unknown retreat rule {other:?} (latency-rank, value-rank)")),
    }
}

/// A failed command: message plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<pipeshard::Error> for Failure {
    fn from(e: pipeshard::Error) -> Self {
        Failure::invalid(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Partition(a) => commands::partition(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Tune(a) => commands::tune(a),
        Command::Compare(a) => commands::compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
