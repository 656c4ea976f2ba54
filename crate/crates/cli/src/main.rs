mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Domain;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Lib(#[from] ieff::Error),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use ieff::Error as E;
        match self {
            CliError::Validation(_) => 1,
            CliError::Lib(E::InvalidInput(_) | E::DimensionMismatch { .. } | E::ClassTooSmall { .. } | E::Parse { .. } | E::NotFound { .. } | E::Json(_)) => 1,
            CliError::Lib(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ieff", version, about = "Interpretive efficiency of representation channels")]
struct Cli {
    /// Base seed; overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config for the subcommand; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for files without an explicit path.
    #[arg(long, global = true, env = "IEFF_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Efficiency of one channel on one dataset CSV.
    Efficiency(EfficiencyArgs),
    /// Reproduce the channel-comparison tables.
    Experiment(ExperimentArgs),
    /// Oracle agreement checks and property batteries.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GenKind {
    Sinusoids,
    Circle,
    Redundant,
    Location,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    kind: GenKind,
    #[arg(long)]
    n: Option<usize>,
    /// Output CSV (default: <out-dir>/<kind>.csv).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Sinusoids: SNR range in dB as LO,HI.
    #[arg(long, value_delimiter = ',')]
    snr_db: Option<Vec<f64>>,
    /// Circle: cap half-width.
    #[arg(long)]
    alpha: Option<f64>,
    /// Circle: label flip probability.
    #[arg(long)]
    q: Option<f64>,
    /// Circle: symmetric caps.
    #[arg(long)]
    symmetric: bool,
    /// Redundant: noise standard deviation.
    #[arg(long)]
    sigma_eps: Option<f64>,
    /// Location: replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Location: observation noise and embedding noise standard deviations.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Debug, Args)]
struct EfficiencyArgs {
    /// Dataset CSV (`label,f0..f{d-1}`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Channel: JSON or identity | standardize | zero | pca:K | randproj:K | fft_topk:K | downsample:M.
    #[arg(long)]
    channel: Option<String>,
    /// Score: JSON or featurewise[:K] | knn-cd:K | dv | nwj | vgib:BETA:K.
    #[arg(long)]
    score: Option<String>,
    #[arg(long, value_parser = ["ratio", "diff"])]
    norm: Option<String>,
    #[arg(long)]
    smin: Option<f64>,
    /// Cross-fitting folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Jackknife groups for bias correction.
    #[arg(long)]
    jackknife: Option<usize>,
    /// Confidence level parameter for the radius.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    comp: Option<f64>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Table {
    Table1,
    Table2,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    table: Table,
    #[arg(long)]
    domain: Option<Domain>,
    /// Digits CSV (falls back to IEFF_DIGITS_CSV).
    #[arg(long)]
    digits: Option<PathBuf>,
    /// Sinusoid training-set size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    score: Option<String>,
    /// Fixed test-noise level instead of calibration (table2).
    #[arg(long)]
    noise_sigma: Option<f64>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Run only these batteries (skips the oracle checks).
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    /// Report path (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
