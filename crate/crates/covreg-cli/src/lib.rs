//! Library surface of the `covreg` command-line tool.
//!
//! The binary in `main.rs` is a thin wrapper; argument parsing, ingestion
//! and the command implementations live here so they are testable
//! in-process.

pub mod commands;
pub mod ingest;
pub mod report;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    RankDeficient(String),
    NonConvergence(String),
    Other(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::RankDeficient(_) => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m)
            | CliError::Io(m)
            | CliError::RankDeficient(m)
            | CliError::NonConvergence(m)
            | CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<covreg::Error> for CliError {
    fn from(e: covreg::Error) -> Self {
        match &e {
            covreg::Error::RankDeficient { .. } => CliError::RankDeficient(e.to_string()),
            covreg::Error::DimensionMismatch { .. }
            | covreg::Error::InvalidConfig(_)
            | covreg::Error::InsufficientData { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "covreg",
    version,
    about = "Covariance regression: fit, test, predict and simulate with JSON output"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Fit the covariance regression model to CSV data.
    Fit(FitArgs),
    /// Likelihood-ratio test: homoscedastic vs rank-1, or between ranks.
    Lrtest(LrtestArgs),
    /// Prediction ellipses per group with an observed-coverage audit.
    PredictRegion(PredictArgs),
    /// Run a seeded simulation study.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Em,
    Gibbs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Single,
    Additive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StudyArg {
    Mse,
    Coverage,
}

#[derive(Args)]
pub struct DataArgs {
    /// Input CSV file (header row required).
    #[arg(long)]
    pub csv: PathBuf,
    /// Response columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub y: Vec<String>,
    /// Covariance-regressor columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<String>,
    /// Mean-regressor columns; defaults to the covariance regressors.
    #[arg(long = "w-cols", value_delimiter = ',')]
    pub w_cols: Option<Vec<String>>,
    /// Derived column, e.g. age2=square(age), one=const(1); repeatable.
    #[arg(long)]
    pub derive: Vec<String>,
}

#[derive(Args)]
pub struct EmArgs {
    /// Maximum EM iterations.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative log-likelihood convergence tolerance.
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Number of random restarts.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Scale of the random initialization of B.
    #[arg(long)]
    pub init_scale: Option<f64>,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    #[arg(long, value_enum, default_value_t = Method::Em)]
    pub method: Method,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Two-sided level of the reported intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[command(flatten)]
    pub em: EmArgs,
    /// Gibbs sweeps (method=gibbs).
    #[arg(long, default_value_t = 2000)]
    pub gibbs_iters: usize,
    #[arg(long, default_value_t = 500)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    /// Also write the JSON report to this path.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    /// Fail (exit 4) if the fit did not converge.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args)]
pub struct LrtestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Null model rank; 0 means the homoscedastic model.
    #[arg(long, default_value_t = 0)]
    pub null_rank: usize,
    /// Alternative model rank.
    #[arg(long, default_value_t = 1)]
    pub alt_rank: usize,
    /// Degrees of freedom override; required when the null rank is
    /// positive, where the parameter count depends on the rotation
    /// dimension.
    #[arg(long)]
    pub df: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args)]
pub struct PredictArgs {
    /// CSV with the observations to audit.
    #[arg(long)]
    pub csv: PathBuf,
    /// A fit report JSON produced by `covreg fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Column whose values define the groups (e.g. age).
    #[arg(long = "group-col")]
    pub group_col: String,
    /// Prediction-region level.
    #[arg(long, default_value_t = 0.9)]
    pub level: f64,
    /// Restrict reporting to these group values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<String>>,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = DesignArg::Single)]
    pub design: DesignArg,
    /// Heteroscedasticity magnitude.
    #[arg(long, default_value_t = 1.0)]
    pub w: f64,
    /// Sample size (per group for the additive design).
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Which single-regressor study to run.
    #[arg(long, value_enum, default_value_t = StudyArg::Mse)]
    pub study: StudyArg,
    /// Use the full replication count (1000) instead of the default.
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    match cli.command {
        Command::Fit(args) => commands::fit::run(args),
        Command::Lrtest(args) => commands::lrtest::run(args),
        Command::PredictRegion(args) => commands::predict::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
    }
}
