use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tvmix::{FitConfig, OdeConfig, Ridge};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "tvmix", version, about = "Time-varying Gaussian mixtures fitted by MMD and smoothed by a neural ODE")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate moving-means scenario replicates.
    Simulate(SimulateArgs),
    /// Fit stage one and the weight trajectory to a panel CSV.
    Fit(FitArgs),
    /// Weight trajectory and density grid from a model file.
    Predict(PredictArgs),
    /// Density error against the scenario truth, or the rate experiment.
    Evaluate(EvaluateArgs),
    /// Bootstrap density bands at observed times.
    Bootstrap(BootstrapArgs),
    /// Plot-ready tables for one or more models.
    Export(ExportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Data dimension.
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Samples per time point.
    #[arg(long = "n-t", default_value_t = 500)]
    pub n_t: usize,
    /// Number of equally spaced times in [0, 1].
    #[arg(long, default_value_t = 11)]
    pub grid: usize,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Stage-one knobs.
#[derive(Debug, Args, Serialize)]
pub struct StageOneArgs {
    /// Uniform ridge, or one value per component separated by commas.
    #[arg(long, value_delimiter = ',', default_value = "1e-6")]
    pub ridge: Vec<f64>,
    #[arg(long = "outer-rounds", default_value_t = 50)]
    pub outer_rounds: usize,
    #[arg(long = "adam-steps", default_value_t = 200)]
    pub adam_steps: usize,
    #[arg(long = "adam-lr", default_value_t = 1e-2)]
    pub adam_lr: f64,
    #[arg(long = "kmeans-restarts", default_value_t = 100)]
    pub kmeans_restarts: usize,
    #[arg(long = "variance-floor", default_value_t = 1e-6)]
    pub variance_floor: f64,
    #[arg(long = "qp-tol", default_value_t = 1e-10)]
    pub qp_tol: f64,
    #[arg(long = "qp-max-iter", default_value_t = 10_000)]
    pub qp_max_iter: usize,
}

impl StageOneArgs {
    pub fn resolve(&self, seed: u64) -> CliResult<FitConfig> {
        let ridge = match self.ridge.as_slice() {
            [] => return Err(CliError::Usage("--ridge needs a value".into())),
            [v] => Ridge::Uniform(*v),
            vs => Ridge::PerComponent(vs.to_vec()),
        };
        let cfg = FitConfig {
            ridge,
            adam_lr: self.adam_lr,
            adam_steps: self.adam_steps,
            outer_rounds: self.outer_rounds,
            qp_tol: self.qp_tol,
            qp_max_iter: self.qp_max_iter,
            variance_floor: self.variance_floor,
            kmeans_restarts: self.kmeans_restarts,
            seed,
            ..FitConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Neural ODE knobs.
#[derive(Debug, Args, Serialize)]
pub struct OdeArgs {
    /// RK4 steps per unit time.
    #[arg(long = "rk4-steps", default_value_t = 100)]
    pub rk4_steps: usize,
    /// Ridge on the field parameters.
    #[arg(long, default_value_t = 1e-4)]
    pub nu: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "32,32")]
    pub hidden: Vec<usize>,
    #[arg(long = "weight-floor", default_value_t = 1e-8)]
    pub weight_floor: f64,
}

impl OdeArgs {
    pub fn resolve(&self, seed: u64) -> CliResult<OdeConfig> {
        let cfg = OdeConfig {
            rk4_steps: self.rk4_steps,
            nu: self.nu,
            lr: self.lr,
            epochs: self.epochs,
            weight_floor: self.weight_floor,
            seed,
            hidden: self.hidden.clone(),
            ..OdeConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Panel CSV with columns subject,t,x1..xd.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of mixture components.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Share components across all subjects in the file.
    #[arg(long = "share-components")]
    pub share_components: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub stage_one: StageOneArgs,
    #[command(flatten)]
    pub ode: OdeArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Number of equally spaced times in [0, 1].
    #[arg(long = "t-grid", conflicts_with = "times")]
    pub t_grid: Option<usize>,
    /// Explicit times, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub times: Option<Vec<f64>>,
    /// Also write a density grid with this many x points (d = 1).
    #[arg(long = "density-points")]
    pub density_points: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeArg {
    Regular,
    Singular,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(subcommand)]
    pub target: EvaluateTarget,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum EvaluateTarget {
    /// Model and KDE density errors against the moving-means truth.
    Density(DensityArgs),
    /// Sup-over-time MMD rate in the regular and singular regimes.
    Rate(RateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DensityArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Simulated data the model was fitted to.
    #[arg(long)]
    pub data: PathBuf,
    /// Importance-sampling nodes for d > 1.
    #[arg(long, default_value_t = 20_000)]
    pub nodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RateArgs {
    #[arg(long, value_enum, default_value_t = RegimeArg::Both)]
    pub regime: RegimeArg,
    #[arg(long, value_delimiter = ',', default_value = "20,50,100,200,300,500")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    /// Observation times per replicate.
    #[arg(long, default_value_t = 5)]
    pub grid: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub stage_one: StageOneArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BootstrapArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Subject to resample; defaults to the first in the file.
    #[arg(long)]
    pub subject: Option<String>,
    /// Observed times at which to report bands, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub times: Vec<f64>,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 200)]
    pub b: usize,
    /// Bands are the level/2 and 1 - level/2 quantiles.
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    /// x points on the band grid.
    #[arg(long = "grid-points", default_value_t = 201)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub stage_one: StageOneArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportArgs {
    /// Model files; more than one adds baseline-centered quantiles.
    #[arg(long, required = true, num_args = 1..)]
    pub model: Vec<PathBuf>,
    /// Number of equally spaced times in [0, 1].
    #[arg(long = "t-grid", default_value_t = 101)]
    pub t_grid: usize,
    /// Quantile levels across subjects, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,0.75,0.9")]
    pub levels: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}
