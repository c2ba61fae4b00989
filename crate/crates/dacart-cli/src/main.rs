//! `dacart` — fit, predict, weight, simulate, and demonstrate domain-adaptive
//! trees from the command line.
//!
//! Exit codes: 0 success, 2 user/validation error, 3 numerical or degenerate
//! error, 4 internal error. Diagnostics go to stderr; stdout carries data.

mod commands;
mod manifest;
mod model_file;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dacart", version, about = "Domain-adaptive trees under covariate shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a labeled source CSV (and optional unlabeled target CSV).
    Fit(FitArgs),
    /// Predict rows with a previously fitted model file.
    Predict(PredictArgs),
    /// Estimate importance weights and emit them as CSV.
    Weights(WeightsArgs),
    /// Gain-based variable importance and the cumulative-share selection.
    Importance(ImportanceArgs),
    /// Run a simulation scenario from a config file and emit long-format CSV.
    Simulate(SimulateArgs),
    /// Linear-model-versus-tree comparison under biased sampling.
    BiasDemo(BiasDemoArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Cart,
    DaCart,
    Bt,
    DaBtBootstrap,
    DaBtSplit,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorChoice {
    /// Propensity odds from a boosted domain classifier.
    Ew,
    /// Kernel density-ratio weights.
    Kliep,
    /// Known selection mechanism (requires --score-column and --true-mechanism).
    True,
    /// Unit weights.
    Unit,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskChoice {
    /// Infer: classification when the response only takes values 0 and 1.
    Auto,
    Regression,
    Classification,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismChoice {
    Restricted,
    Shifted,
}

#[derive(Args)]
pub struct TreeFlags {
    /// Maximum split depth.
    #[arg(long, default_value_t = 30)]
    pub max_depth: usize,
    /// Minimum weight mass per child node.
    #[arg(long, default_value_t = 10.0)]
    pub min_node_weight: f64,
    /// Minimum criterion gain to accept a split.
    #[arg(long, default_value_t = 0.0)]
    pub min_gain: f64,
    /// Complexity penalty: required gain as a fraction of root impurity.
    #[arg(long, default_value_t = 0.01)]
    pub complexity: f64,
    /// Skip cost-complexity pruning.
    #[arg(long)]
    pub no_prune: bool,
    /// Folds for the pruning cross-validation.
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
}

#[derive(Args)]
pub struct WeightFlags {
    /// Comma-separated feature names for the weight model
    /// (default: the step-1 selection for fit, all features for weights).
    #[arg(long, value_delimiter = ',')]
    pub weight_features: Option<Vec<String>>,
    /// Lower propensity truncation bound.
    #[arg(long, default_value_t = 0.05)]
    pub trunc_lo: f64,
    /// Upper propensity truncation bound.
    #[arg(long, default_value_t = 0.95)]
    pub trunc_hi: f64,
    /// Boosting rounds for the propensity model.
    #[arg(long, default_value_t = 100)]
    pub rounds: usize,
    /// Boosting learning rate.
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    /// Depth of each boosting tree.
    #[arg(long, default_value_t = 3)]
    pub boost_depth: usize,
    /// Kernel centers for the density-ratio estimator.
    #[arg(long, default_value_t = 100)]
    pub kliep_centers: usize,
    /// Fixed kernel width (default: cross-validated grid).
    #[arg(long)]
    pub kliep_sigma: Option<f64>,
    /// Column holding the selection score (with --estimator true).
    #[arg(long)]
    pub score_column: Option<String>,
    /// Known selection mechanism (with --estimator true).
    #[arg(long, value_enum)]
    pub true_mechanism: Option<MechanismChoice>,
}

#[derive(Args)]
pub struct FitArgs {
    /// Labeled source CSV.
    #[arg(long)]
    pub source: PathBuf,
    /// Unlabeled target CSV (required for domain-adaptive models).
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Response column name in the source CSV.
    #[arg(long)]
    pub response: String,
    /// Column holding per-row weights for plain cart/bt fits.
    #[arg(long)]
    pub weights_col: Option<String>,
    /// Restrict training to these feature columns.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = ModelChoice::Cart)]
    pub model: ModelChoice,
    #[arg(long, value_enum, default_value_t = EstimatorChoice::Ew)]
    pub estimator: EstimatorChoice,
    #[arg(long, value_enum, default_value_t = TaskChoice::Auto)]
    pub task: TaskChoice,
    /// Cumulative gain-share threshold for variable selection.
    #[arg(long, default_value_t = 0.85)]
    pub threshold: f64,
    /// Ensemble size for bagged models.
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[command(flatten)]
    pub tree: TreeFlags,
    #[command(flatten)]
    pub weights: WeightFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model file to write.
    #[arg(long, default_value = "model.txt")]
    pub out: PathBuf,
    /// Selection/weights report file to write.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also print the fitted tree document(s) to stdout.
    #[arg(long)]
    pub dump_tree: bool,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Model file written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of rows to predict.
    #[arg(long)]
    pub rows: PathBuf,
    /// Response column to ignore if present in the rows file.
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct WeightsArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Response column to exclude from the covariates, if present.
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, value_enum, default_value_t = EstimatorChoice::Ew)]
    pub estimator: EstimatorChoice,
    #[command(flatten)]
    pub weights: WeightFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "weights.csv")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub response: String,
    #[arg(long, value_enum, default_value_t = TaskChoice::Auto)]
    pub task: TaskChoice,
    #[arg(long, default_value_t = 0.85)]
    pub threshold: f64,
    #[command(flatten)]
    pub tree: TreeFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional file for the importance table (stdout otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the replication count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the source sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the bagged-ensemble size.
    #[arg(long)]
    pub n_trees: Option<usize>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "results.csv")]
    pub out: PathBuf,
    /// Also print per-model median and quartiles.
    #[arg(long)]
    pub summary: bool,
}

#[derive(Args)]
pub struct BiasDemoArgs {
    #[arg(long, default_value_t = 100)]
    pub replications: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional file for the summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A command failure carrying its exit code.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    pub fn degenerate(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Failure { code: 4, message: message.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => commands::fit(args),
        Command::Predict(args) => commands::predict(args),
        Command::Weights(args) => commands::weights(args),
        Command::Importance(args) => commands::importance(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::BiasDemo(args) => commands::bias_demo(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
