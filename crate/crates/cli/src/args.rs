use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "cuwls", version, about = "Weighted least-squares fitting of stable tail dependence models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw a synthetic sample and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit a parametric model to a CSV sample.
    Fit(FitArgs),
    /// Fit and run a goodness-of-fit test.
    Gof(FitArgs),
    /// Monte Carlo study: bias, sd and RMSE over a k grid.
    Study(StudyArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Br,
    Maxlinear,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorArg {
    Shifted,
    Raw,
    Kernel,
    Biascorr,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Edge list for the max-linear model: `parent child name` per line.
    #[arg(long)]
    pub dag: Option<PathBuf>,
    /// Location grid for the Brown-Resnick model, e.g. `3x4`.
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub n: usize,
    /// Dimension (logistic only; other models take it from --dag or --grid).
    #[arg(long)]
    pub d: Option<usize>,
    /// Comma-separated parameters: theta (logistic), alpha,rho (br), edge weights (maxlinear).
    #[arg(long, value_delimiter = ',', required = true)]
    pub theta: Vec<f64>,
    /// Add |N(0, sd^2)| noise.
    #[arg(long)]
    pub noise: bool,
    #[arg(long, default_value_t = 0.5)]
    pub noise_sd: f64,
    /// Cap on Poisson points per Brown-Resnick row.
    #[arg(long, default_value_t = 10_000)]
    pub max_points: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sample: SampleArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; a `.meta.json` sidecar is written next to it. Stdout if omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EstimationArgs {
    /// grid:LEVELS:COUNTS | pairs:A | neighbours:MAXDIST | file:PATH
    #[arg(long)]
    pub points: String,
    #[arg(long, value_enum, default_value = "shifted")]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 5.0)]
    pub tau: f64,
    /// Secondary tail count for the bias-corrected estimator.
    #[arg(long)]
    pub k1: Option<usize>,
    /// identity | optimal | tikhonov[:C]
    #[arg(long, default_value = "identity")]
    pub weight: String,
    /// optimal | spectral[:THRESHOLD]
    #[arg(long)]
    pub gof: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FitArgs {
    /// CSV sample, comma or semicolon separated, optional header.
    #[arg(long)]
    pub input: PathBuf,
    /// JSON report destination. Stdout if omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub estimation: EstimationArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct StudyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sample: SampleArgs,
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub k_grid: Vec<usize>,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Worker threads for replicates (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Summary CSV destination. Stdout if omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional per-replicate CSV.
    #[arg(long)]
    pub replicates: Option<PathBuf>,
}
