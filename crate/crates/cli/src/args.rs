use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use obstacle_ridge::Mode;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "obstacle-ridge",
    version,
    about = "Renormalized ridge regression with Green-function obstacles"
)]
pub struct Cli {
    /// Worker threads; falls back to OBSTACLE_RIDGE_THREADS, then to all cores.
    /// Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a CSV dataset with header x1,...,xd,y.
    Fit(FitArgs),
    /// Evaluate a fitted model on a CSV of query points.
    Predict(PredictArgs),
    /// Ridge convergence-rate study on synthetic data.
    RateStudy(StudyArgs),
    /// Norm-constrained convergence-rate study on synthetic data.
    ErmStudy(StudyArgs),
    /// Run the numerical invariant suite.
    Check(CheckArgs),
    /// Interpolating bump sums with vanishing energy.
    Illposed(IllposedArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QuadArgs {
    /// Sphere rule level: 100 * 4^(level-1) nodes in d = 3, ten times more (Monte Carlo) above.
    #[arg(long, default_value_t = 2)]
    pub quad_level: u32,

    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// Training data.
    pub data: PathBuf,

    /// Expected dimension; inferred from the header when omitted.
    #[arg(long)]
    pub d: Option<usize>,

    #[arg(long, default_value_t = 1.0)]
    pub gamma0: f64,

    #[arg(long, default_value_t = 1.0)]
    pub lambda0: f64,

    #[arg(long, default_value = "ridge", value_parser = parse_mode)]
    pub mode: Mode,

    /// Norm bound M for --mode erm.
    #[arg(long)]
    pub norm_bound: Option<f64>,

    /// Use lambda = kappa * gamma^(2/(2-d)) instead of the lambda0 schedule.
    #[arg(long)]
    pub linked_kappa: Option<f64>,

    #[command(flatten)]
    #[serde(flatten)]
    pub quad: QuadArgs,

    /// Model file to write (JSON).
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    /// Model written by `fit`.
    pub model: PathBuf,

    /// Query points with header x1,...,xd (a trailing y column is ignored).
    pub queries: PathBuf,

    /// Report capacitary means instead of raw kernel sums.
    #[arg(long)]
    pub smoothed: bool,

    #[command(flatten)]
    #[serde(flatten)]
    pub quad: QuadArgs,

    /// Output CSV; stdout when omitted.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StudyArgs {
    #[arg(long, default_value_t = 3)]
    pub d: usize,

    #[arg(long, default_value_t = 1.0)]
    pub gamma0: f64,

    #[arg(long, default_value_t = 1.0)]
    pub lambda0: f64,

    /// Overrides the subcommand's mode when given.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,

    #[arg(long)]
    pub linked_kappa: Option<f64>,

    #[arg(long, value_delimiter = ',', default_values_t = [256usize, 512, 1024, 2048, 4096])]
    pub n_grid: Vec<usize>,

    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
    pub seeds: Vec<u64>,

    #[arg(long, default_value_t = 0.5)]
    pub noise_sd: f64,

    #[arg(long, default_value_t = 10_000)]
    pub test_size: usize,

    #[arg(long, default_value_t = 5)]
    pub target_centers: usize,

    #[arg(long, default_value_t = 2.0)]
    pub target_tau: f64,

    /// ERM norm bound as a multiple of the target's energy norm.
    #[arg(long, default_value_t = 2.0)]
    pub bound_factor: f64,

    /// Accepted slope interval `lo,hi`; defaults to the band for the mode.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub band: Option<Vec<f64>>,

    #[command(flatten)]
    #[serde(flatten)]
    pub quad: QuadArgs,

    /// Output directory for cells.csv and summary.json.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,

    /// Also write per-cell wall-clock times to timing.csv.
    #[arg(long)]
    #[serde(skip)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Report file (JSON); stdout when omitted.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IllposedArgs {
    #[arg(long, default_value_t = 3)]
    pub d: usize,

    /// Bump widths, strictly decreasing; defaults to six halvings below half
    /// the minimum separation.
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<f64>>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output CSV; stdout when omitted.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: obstacle_ridge::Error| e.to_string())
}
