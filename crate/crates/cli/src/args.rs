use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "psdyn", version, about = "Effective population size reconstruction with preferential sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate sampling times and a genealogy; writes Newick, dates and truth.
    Simulate(SimulateArgs),
    /// Reconstruct a trajectory from a dated Newick tree.
    Infer(InferArgs),
    /// Monte Carlo study across sampling schedules and models.
    Study(StudyArgs),
    /// Interval statistics of trajectory CSVs against a known truth.
    Metrics(MetricsArgs),
    /// Study with sampling intensities independent of the trajectory.
    Negctl(NegctlArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TruthArgs {
    /// `seasonal` or `constant:<N>`.
    #[arg(long, default_value = "seasonal")]
    pub ne: String,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub a: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub o: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub truth: TruthArgs,
    /// `uniform`, `proportional`, `proportional:<beta1>`, `piecewise` or `brownian`.
    #[arg(long, default_value = "uniform")]
    pub schedule: String,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value = "0:48")]
    pub window: String,
    /// Sampling-window end for the preferential likelihood; defaults to the window end.
    #[arg(long)]
    pub s0: Option<f64>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Replicate index; selects the generator stream.
    #[arg(long, default_value_t = 0)]
    pub replicate: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct InferArgs {
    /// Comma-separated list of `bnpr`, `bnpr-ps`.
    #[arg(long, default_value = "bnpr,bnpr-ps")]
    pub model: String,
    #[arg(long)]
    pub tree: PathBuf,
    /// Tab-separated `label<TAB>time` tip dates.
    #[arg(long)]
    pub dates: Option<PathBuf>,
    /// Number of grid cells.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    /// Sampling-window end; defaults to the oldest sampling time.
    #[arg(long)]
    pub s0: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Hold beta0 fixed (requires --beta1).
    #[arg(long, requires = "beta1")]
    pub beta0: Option<f64>,
    #[arg(long, requires = "beta0", allow_negative_numbers = true)]
    pub beta1: Option<f64>,
    /// Evaluation points for the relative-width statistic.
    #[arg(long, default_value_t = 300)]
    pub k: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StudyCommon {
    /// Amplitude of the seasonal trajectory.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub a: f64,
    /// Phase offset of the seasonal trajectory.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub o: f64,
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long, default_value = "0:48")]
    pub window: String,
    #[arg(long)]
    pub s0: Option<f64>,
    #[arg(long, default_value_t = 300)]
    pub k: usize,
    #[arg(long, default_value = "bnpr,bnpr-ps")]
    pub models: String,
    #[arg(long, default_value = "0:6,6:48")]
    pub intervals: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Worker threads; defaults to all available cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct StudyArgs {
    #[command(flatten)]
    pub common: StudyCommon,
    #[arg(long, default_value = "uniform,proportional")]
    pub schedules: String,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct NegctlArgs {
    #[command(flatten)]
    pub common: StudyCommon,
    /// Comma-separated list of `piecewise`, `brownian`.
    #[arg(long, default_value = "piecewise,brownian")]
    pub kinds: String,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub truth: TruthArgs,
    /// Comma-separated trajectory CSVs (`time,median,q025,q975`).
    #[arg(long, required = true)]
    pub trajectories: String,
    #[arg(long, default_value = "0:6,6:48")]
    pub intervals: String,
    #[arg(long, default_value = "0:48")]
    pub window: String,
    #[arg(long, default_value_t = 300)]
    pub k: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
