use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Seed used by `simulate` when neither `--seed` nor the configuration sets one.
pub const DEFAULT_SEED: u64 = 20_160_901;

#[derive(Debug, Parser)]
#[command(name = "oneshot", version, about = "Robust DPD inference for one-shot device testing data")]
pub struct Cli {
    /// Write the JSON report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Emit full-precision numbers instead of 6 significant digits.
    #[arg(long, global = true)]
    pub raw: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Weighted minimum DPD fit for one or more tuning parameters.
    Fit(FitArgs),
    /// Confidence intervals for reliabilities at the inspection times.
    Ci(CiArgs),
    /// Wald-type test of a linear hypothesis on the parameters.
    Wald(WaldArgs),
    /// Distance statistic and its exact p-value.
    Gof(FitArgs),
    /// Data-driven choice of the tuning parameter over a grid.
    Tune(TuneArgs),
    /// Monte Carlo study defined by a TOML configuration.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Device CSV: inspection_time, x1..xJ, tested, failures.
    #[arg(long)]
    pub data: PathBuf,

    /// Optimizer iteration cap per start.
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,

    /// Convergence threshold on the gradient infinity norm.
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Tuning parameter(s); 0 is maximum likelihood.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Plain,
    Logit,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct CiArgs {
    #[command(flatten)]
    pub fit: FitArgs,

    /// Stress condition, comma separated (one value per factor).
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub stress: Vec<f64>,

    /// Inspection time(s); all inspection times when omitted.
    #[arg(long, value_delimiter = ',')]
    pub time: Vec<f64>,

    #[arg(long, default_value_t = 0.95)]
    pub level: f64,

    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    pub method: MethodArg,
}

#[derive(Debug, Clone, Args)]
pub struct WaldArgs {
    #[command(flatten)]
    pub fit: FitArgs,

    /// Linear restriction such as `alpha1=0.04946` or `eta1 - 2*eta2 = 0`;
    /// repeat for several rows. Parameters are eta1..etaI, alpha1..alphaJ.
    #[arg(long = "hypothesis", required = true, allow_hyphen_values = true)]
    pub hypotheses: Vec<String>,

    /// Nominal level of the reported decision.
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Distance,
    WarwickJones,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, value_enum, default_value_t = CriterionArg::Distance)]
    pub criterion: CriterionArg,

    /// Candidate values; defaults to 0, 0.01, ..., 1.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,

    /// Pilot tuning parameter of the Warwick-Jones criterion.
    #[arg(long, default_value_t = oneshot_core::adequacy::DEFAULT_PILOT_BETA)]
    pub pilot: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Experiment definition (TOML).
    #[arg(long)]
    pub config: PathBuf,

    /// Master seed; overrides the configuration.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Replicates per design; overrides the configuration.
    #[arg(long)]
    pub replicates: Option<usize>,

    /// Also write long-format CSV (sweep, x, series, metric, parameter, value).
    #[arg(long)]
    pub emit_plot_data: Option<PathBuf>,
}
