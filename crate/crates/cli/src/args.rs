use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "igbm",
    version,
    about = "Simulate and analyse numerical schemes for the inhomogeneous geometric Brownian motion",
    long_about = "Simulate and analyse numerical schemes for dY = (-Y/tau + mu) dt + sigma Y dW.\n\n\
                  Schemes: E (Euler-Maruyama), M (Milstein), L1, L2 (Lie-Trotter), S1, S2 (Strang), \
                  GBM (exact flow, mu = 0 only).\n\
                  Set IGBM_THREADS to cap the number of worker threads; results do not depend on it."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Write sample trajectories, one CSV file per scheme and path
    Simulate(SimulateArgs),
    /// Exact and scheme moments as JSON
    Moments(MomentsArgs),
    /// Relative biases of the closed-form moments over a sweep
    BiasSweep(BiasSweepArgs),
    /// Kernel density estimates of the long-time law and their KL divergence
    Stationary(StationaryArgs),
    /// Probability of reaching zero before a time horizon
    Crossing(CrossingArgs),
    /// Discrete boundary properties, analytic and empirical
    BoundaryCheck(BoundaryArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Drift level mu [state/time]
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub mu: f64,
    /// Relaxation time tau [time], > 0
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub tau: f64,
    /// Noise intensity sigma [1/sqrt(time)], > 0
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub sigma: f64,
    /// Initial value Y0 [state]
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub y0: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Schemes, comma separated (e, m, l1, l2, s1, s2, gbm, all, splitting)
    #[arg(long, value_delimiter = ',', default_value = "s1")]
    pub scheme: Vec<String>,
    /// Time step [time], > 0
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub dt: f64,
    /// Simulated horizon [time], > 0
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub tmax: f64,
    /// Number of paths per scheme [count], >= 1
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    /// Random seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory [path]
    #[arg(long, default_value = "trajectories")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MomentsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Schemes, comma separated (e, m, l1, l2, s1, s2, gbm, all, splitting)
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub scheme: Vec<String>,
    /// Time step [time], > 0
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub dt: f64,
    /// Evaluation time [time], a multiple of the step
    #[arg(long, default_value_t = 15.0, allow_negative_numbers = true)]
    pub t: f64,
    /// Monte Carlo paths for sample moments [count]; 0 skips simulation
    #[arg(long, default_value_t = 0)]
    pub paths: usize,
    /// Random seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output file [path]; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Dt,
    T,
    Y0,
    Tau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BiasSweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Quantity swept
    #[arg(long, value_enum)]
    pub axis: SweepAxis,
    /// Axis values, comma separated [axis units]
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        conflicts_with = "range"
    )]
    pub values: Vec<f64>,
    /// Evenly spaced axis values as start:stop:count [axis units]
    #[arg(long)]
    pub range: Option<String>,
    /// Schemes, comma separated (e, m, l1, l2, s1, s2, all, splitting)
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub scheme: Vec<String>,
    /// Time step when the axis is not dt [time], > 0
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub dt: f64,
    /// Evaluation time [time]; asymptotic biases when absent (required for the t axis)
    #[arg(long, allow_negative_numbers = true)]
    pub t: Option<f64>,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file [path]; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StationaryArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Schemes, comma separated (e, m, l1, l2, s1, s2, all, splitting)
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub scheme: Vec<String>,
    /// Time step [time], > 0
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub dt: f64,
    /// Sampling time [time], a multiple of the step
    #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
    pub t: f64,
    /// Number of paths [count], >= 2
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    /// Random seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Density grid points [count], >= 2
    #[arg(long, default_value_t = 2001)]
    pub points: usize,
    /// Kernel bandwidth: "silverman" or a positive number [state]
    #[arg(long, default_value = "silverman")]
    pub bandwidth: String,
    /// Output directory [path]
    #[arg(long, default_value = "stationary")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CrossingArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Drift levels to sweep, comma separated [state/time]; defaults to --mu
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        conflicts_with = "mu_range"
    )]
    pub mu_values: Vec<f64>,
    /// Evenly spaced drift levels as start:stop:count [state/time]
    #[arg(long, allow_hyphen_values = true)]
    pub mu_range: Option<String>,
    /// Time steps, comma separated [time]
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.01,0.025,0.05",
        allow_negative_numbers = true
    )]
    pub dt: Vec<f64>,
    /// Schemes, comma separated (e, m, l1, l2, s1, s2, all, splitting)
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub scheme: Vec<String>,
    /// Horizon [time], > 0
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub tmax: f64,
    /// Number of paths [count], >= 1
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    /// Random seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output file [path]; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundaryArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Schemes, comma separated (e, m, l1, l2, s1, s2, all, splitting)
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub scheme: Vec<String>,
    /// Properties, comma separated (unattainable, absorbing, entrance, exit, all)
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub property: Vec<String>,
    /// Time steps, comma separated [time]
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.01,0.1,1,10",
        allow_negative_numbers = true
    )]
    pub dt: Vec<f64>,
    /// Steps followed along each probing path [count]
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Number of probing paths [count], >= 1
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    /// Random seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output file [path]; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}
