//! `phasestep` command-line tool.

mod commands;
mod pair;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "phasestep",
    version,
    about = "Two-frame phase-step and phase-map recovery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic interferogram pairs (PFM frames + pair.json sidecar).
    Generate(GenerateArgs),
    /// Gabor-filter-bank normalization of a single frame.
    Normalize(NormalizeArgs),
    /// Estimate the phase step of a pair with each selected method.
    EstimateStep(PairCommand),
    /// Estimate the step, recover the phase map and score it when truth is known.
    Demodulate(DemodulateArgs),
    /// Run a factorial suite and write per-pair and aggregate tables.
    Sweep(SweepArgs),
    /// Phase MAE of the LEF formula and the two-step formula across estimators.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Single-pair spec (JSON). Omit together with --suite for the reference suite.
    #[arg(long, conflicts_with = "suite")]
    spec: Option<PathBuf>,
    /// Suite spec (JSON); `-` or no file with --suite uses the reference suite.
    #[arg(long, num_args = 0..=1, default_missing_value = "-")]
    suite: Option<String>,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    /// Overrides the noise seed (pair) or base seed (suite).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct NormalizeArgs {
    /// Input frame (.pfm, .png or .csv).
    input: PathBuf,
    /// Output file; format from the extension.
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the low-frequency blend with this low-pass sigma (pixels).
    #[arg(long)]
    blend_sigma: Option<f64>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

/// Frames given either as a pair directory or as individual files.
#[derive(Args)]
struct PairInput {
    /// Directory with frame1.pfm, frame2.pfm and optional truth files.
    #[arg(long, conflicts_with_all = ["frame1", "frame2"])]
    pair: Option<PathBuf>,
    #[arg(long, requires = "frame2")]
    frame1: Option<PathBuf>,
    #[arg(long, requires = "frame1")]
    frame2: Option<PathBuf>,
    /// Ground-truth phase (radians), when not taken from a pair directory.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Ground-truth step (radians), when not taken from a pair directory.
    #[arg(long)]
    truth_step: Option<f64>,
}

#[derive(Args)]
struct PairCommand {
    #[command(flatten)]
    input: PairInput,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Write the JSON report here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DemodulateArgs {
    #[command(flatten)]
    input: PairInput,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Estimator used for the phase map.
    #[arg(long, default_value = "SLEF-RE")]
    method: String,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Suite spec (JSON); defaults to the reference suite.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Keep only the first N pattern families.
    #[arg(long)]
    families: Option<usize>,
    /// Output directory for sweep.csv, timing.csv and summary.json.
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    input: PairInput,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output directory for compare.json and wrapped-error maps.
    #[arg(long, short)]
    out: PathBuf,
}

/// Overrides applied on top of `--config`.
#[derive(Args, Default)]
struct PipelineArgs {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for synthetic suites.
    #[arg(long)]
    seed: Option<u64>,
    /// Use every N-th pixel along each axis for the cloud.
    #[arg(long)]
    stride: Option<usize>,
    /// Pixels ignored on every side.
    #[arg(long)]
    border_crop: Option<usize>,
    /// Leclerc κ.
    #[arg(long)]
    kappa: Option<f64>,
    /// Reweighted iterations after the least-squares start.
    #[arg(long)]
    iterations: Option<usize>,
    /// Methods (comma separated): SLEF-LS, SLEF-RE, LEF-5term.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Gabor periods in pixels (comma separated).
    #[arg(long, value_delimiter = ',')]
    periods: Vec<f64>,
    /// Number of Gabor orientations.
    #[arg(long)]
    orientations: Option<usize>,
    /// Treat inputs as already normalized.
    #[arg(long)]
    skip_normalize: bool,
    /// Write normalized frames, the cloud and fit details.
    #[arg(long)]
    dump_intermediates: bool,
    /// Remove the circular-mean piston before scoring phase maps.
    #[arg(long)]
    piston_removal: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Normalize(a) => commands::normalize(a),
        Command::EstimateStep(a) => commands::estimate_step(a),
        Command::Demodulate(a) => commands::demodulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Compare(a) => commands::compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
