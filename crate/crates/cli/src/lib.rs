//! Batch front end: synthetic sequences, flow fields, super-resolution runs,
//! trajectory inspection and the attention cost report.

pub mod commands;
pub mod frames;
pub mod synth;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use synth::SynthKind;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or unusable input files.
    #[error("{0}")]
    Input(String),
    /// A file was read but its contents are malformed.
    #[error("{0}")]
    Format(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Format(_) => 3,
        }
    }
}

impl From<ttvsr_core::Error> for CliError {
    fn from(e: ttvsr_core::Error) -> Self {
        use ttvsr_core::Error as E;
        match e {
            E::WeightLoad { .. } | E::Format { .. } => CliError::Format(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ttvsr_bench::BenchError> for CliError {
    fn from(e: ttvsr_bench::BenchError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ttvsr",
    version,
    about = "Trajectory-aware video super-resolution"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic frame sequence.
    Synth(SynthArgs),
    /// Estimate block-matching flows between consecutive frames.
    Flow(FlowArgs),
    /// Super-resolve a frame sequence by 4x.
    Sr(SrArgs),
    /// Compare a location-map trajectory with per-point flow chaining.
    Traj(TrajArgs),
    /// Report vanilla vs trajectory attention cost.
    Bench(BenchArgs),
    /// Write a seeded or all-zero weight file.
    InitWeights(InitWeightsArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 5)]
    pub frames: usize,
    /// Frame size as HxW.
    #[arg(long, default_value = "16x16", value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Block-matching window side (odd).
    #[arg(long, default_value_t = 5)]
    pub patch: usize,
    /// Block-matching search radius in pixels.
    #[arg(long, default_value_t = 3)]
    pub radius: usize,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    pub in_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub matching: MatchArgs,
}

#[derive(Debug, Args)]
pub struct NetArgs {
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    #[arg(long, default_value_t = 5)]
    pub extract_blocks: usize,
    #[arg(long, default_value_t = 60)]
    pub recon_blocks: usize,
    /// Also run backward in time and fuse both directions.
    #[arg(long)]
    pub bidirectional: bool,
}

#[derive(Debug, Args)]
pub struct SrArgs {
    pub in_dir: PathBuf,
    pub out_dir: PathBuf,
    /// TTWB weight file; seeded weights are used when absent.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Temporal sampling interval of the coarse memory.
    #[arg(long, default_value_t = 3)]
    pub interval: usize,
    /// Print a digest of the unquantized outputs.
    #[arg(long)]
    pub golden_hash: bool,
    /// Ground-truth frames; enables metrics.csv.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Compute SSIM on luma instead of averaging RGB channels.
    #[arg(long)]
    pub luma: bool,
    /// Directory of .flo files written by `ttvsr flow`, used instead of
    /// block matching.
    #[arg(long)]
    pub flows: Option<PathBuf>,
    /// Keep at most this many location maps.
    #[arg(long)]
    pub ring_limit: Option<usize>,
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub matching: MatchArgs,
}

#[derive(Debug, Args)]
pub struct TrajArgs {
    pub in_dir: PathBuf,
    /// Query cell in the last frame as ROW,COL.
    #[arg(long, value_parser = parse_cell)]
    pub cell: (usize, usize),
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub matching: MatchArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(long, default_value_t = 4)]
    pub channels: usize,
    #[arg(long, default_value_t = 16)]
    pub height: usize,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    #[arg(long, default_value_t = 4)]
    pub dh: usize,
    #[arg(long, default_value_t = 4)]
    pub dw: usize,
    /// Also run the instrumented passes and check them against the formulas.
    #[arg(long)]
    pub measure: bool,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InitWeightsArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// All-zero weights instead of seeded ones.
    #[arg(long)]
    pub zeros: bool,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub net: NetArgs,
}

fn parse_pair(s: &str, sep: char, what: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(sep)
        .ok_or_else(|| format!("expected {what}, got {s:?}"))?;
    let a = a
        .trim()
        .parse()
        .map_err(|_| format!("bad number {a:?} in {s:?}"))?;
    let b = b
        .trim()
        .parse()
        .map_err(|_| format!("bad number {b:?} in {s:?}"))?;
    Ok((a, b))
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    parse_pair(&s.to_ascii_lowercase(), 'x', "HxW")
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    parse_pair(s, ',', "ROW,COL")
}

/// Dispatch one parsed command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => commands::cmd_synth(&a),
        Command::Flow(a) => commands::cmd_flow(&a),
        Command::Sr(a) => commands::cmd_sr(&a).map(|_| ()),
        Command::Traj(a) => commands::cmd_traj(&a).map(|_| ()),
        Command::Bench(a) => commands::cmd_bench(&a),
        Command::InitWeights(a) => commands::cmd_init_weights(&a),
    }
}
