//! `lutnet`: train, compile, emit, simulate, verify and report.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use lutnet_core::PipelineStrategy;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] lutnet_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Io { .. } => "E_IO",
            CliError::Usage(_) => "E_USAGE",
            CliError::Mismatch(_) => "E_MISMATCH",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Mismatch(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "lutnet", version, about = "Compile quantized sparse polynomial networks into lookup tables and Verilog")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write model.json.
    Train(TrainArgs),
    /// Enumerate every table of a trained model into netlist.json.
    Compile(CompileArgs),
    /// Write Verilog modules and a self-checking testbench.
    Emit(EmitArgs),
    /// Run the cycle-level pipeline model on seeded inputs.
    Simulate(SimulateArgs),
    /// Check model, netlist and RTL against each other.
    Verify(VerifyArgs),
    /// Print table sizes and latency for a configuration or netlist.
    Report(ReportArgs),
    /// train, compile, emit and verify into one output directory.
    Pipeline(PipelineArgs),
    /// Replay a recorded run into a new directory and compare artifact hashes.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone)]
#[command(group(ArgGroup::new("source").required(true).args(["preset", "config"])))]
pub struct ConfigArgs {
    /// Named configuration (hdr, jsc-xl, jsc-m-lite, nid-lite and their -add2 forms).
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sub-neurons per adder.
    #[arg(long = "A")]
    pub adder: Option<usize>,
    /// Polynomial degree.
    #[arg(long = "D")]
    pub degree: Option<u32>,
    /// Fan-in per sub-neuron.
    #[arg(long = "F")]
    pub fanin: Option<usize>,
    /// Hidden activation bits.
    #[arg(long)]
    pub beta: Option<u32>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset: IDX image file, CSV file, or synthetic-<blobs|nonlinear|digits8x8>[:k=v,...].
    #[arg(long)]
    pub data: String,
    /// idx-images, csv-tabular or synthetic; inferred when omitted.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long, default_value_t = 0.25)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct HyperArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    #[arg(long, default_value = "lutnet-out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct StrategyArgs {
    /// per-layer or combined.
    #[arg(long)]
    pub strategy: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct CheckArgs {
    /// Enumerate all inputs when the input space has at most this many bits.
    #[arg(long, default_value_t = lutnet_core::sim::DEFAULT_EXHAUSTIVE_BITS)]
    pub exhaustive_bound: u32,
    /// Seeded samples when the input space is larger.
    #[arg(long, default_value_t = lutnet_core::sim::DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub sample_seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct CompileArgs {
    /// Defaults to <out-dir>/model.json.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Refuse tables with more than 2^cap-bits entries.
    #[arg(long, default_value_t = lutnet_core::tablegen::DEFAULT_CAP_BITS)]
    pub cap_bits: u32,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct EmitArgs {
    /// Defaults to <out-dir>/netlist.json.
    #[arg(long)]
    pub netlist: Option<PathBuf>,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    /// Testbench vectors.
    #[arg(long, default_value_t = 32)]
    pub vectors: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub netlist: Option<PathBuf>,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    /// Items streamed through the pipeline, one per cycle.
    #[arg(long, default_value_t = 8)]
    pub items: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub period_ns: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub netlist: Option<PathBuf>,
    /// Defaults to <out-dir>/rtl.
    #[arg(long)]
    pub rtl_dir: Option<PathBuf>,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[command(flatten)]
    pub check: CheckArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("what").required(true).args(["preset", "config", "netlist"])))]
pub struct ReportArgs {
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["preset", "config"])]
    pub netlist: Option<PathBuf>,
    #[arg(long = "A")]
    pub adder: Option<usize>,
    #[arg(long = "D")]
    pub degree: Option<u32>,
    #[arg(long = "F")]
    pub fanin: Option<usize>,
    #[arg(long)]
    pub beta: Option<u32>,
    /// Clock period for the latency line.
    #[arg(long)]
    pub period_ns: Option<f64>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[command(flatten)]
    pub check: CheckArgs,
    #[arg(long, default_value_t = 32)]
    pub vectors: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Fresh directory for the replayed artifacts.
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn parse_strategy(s: &StrategyArgs) -> Result<Option<PipelineStrategy>, CliError> {
    s.strategy.as_deref().map(str::parse).transpose().map_err(CliError::from)
}

fn init_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("LUTNET_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("LUTNET_WORKERS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse_from(std::iter::once("lutnet".to_string()).chain(args.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail(&CliError::Usage(first_line(&e.to_string()))),
    };
    match init_workers().and_then(|_| commands::run(cli.command, &args)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

/// Clap's message up to the usage block, folded onto one line.
fn first_line(text: &str) -> String {
    let parts: Vec<&str> = text
        .lines()
        .take_while(|l| !l.starts_with("Usage:"))
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if parts.is_empty() {
        return "bad arguments".into();
    }
    parts.join(" ").trim_start_matches("error: ").to_string()
}

fn fail(e: &CliError) -> ExitCode {
    let msg = e.to_string().replace('\n', "; ");
    eprintln!("error[{}]: {}", e.code(), msg);
    ExitCode::from(e.exit_code())
}
