//! `oal`: command-line front end for threshold-based online active learning.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Runtime errors are
//! written to stderr as `{"error": {"kind": ..., "message": ...}}`.

mod commands;
mod rows;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oal_core::datagen::DistributionKind;
use oal_core::harness::{Centering, ThresholdChoice};
use oal_core::rng::DEFAULT_SEED;

#[derive(Parser, Debug)]
#[command(
    name = "oal",
    version,
    about = "Online active learning with thresholding rules"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment config and write records CSV and summary JSON.
    Experiment(ExperimentArgs),
    /// Print the threshold rule for (d, n, k) as JSON.
    Threshold(ThresholdArgs),
    /// Evaluate closed-form MSE bounds and print them as a JSON array.
    Bounds(BoundsArgs),
    /// Read rows from stdin and print one SELECT/SKIP line per row.
    SelectStream(SelectArgs),
    /// Validate a CSV dataset and print dimensions and centering diagnostics.
    DatasetCheck(DatasetArgs),
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Records CSV output path.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Summary JSON output path; stdout when absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the worker count.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Run replications on the calling thread only.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    GaussianExact,
    GaussianClosedForm,
    Clt,
    Empirical,
}

impl From<MethodArg> for ThresholdChoice {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::GaussianExact => ThresholdChoice::GaussianExact,
            MethodArg::GaussianClosedForm => ThresholdChoice::GaussianClosedForm,
            MethodArg::Clt => ThresholdChoice::Clt,
            MethodArg::Empirical => ThresholdChoice::Empirical,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistributionArg {
    Gaussian,
    LaplaceCopula,
    UniformWhite,
}

impl From<DistributionArg> for DistributionKind {
    fn from(d: DistributionArg) -> Self {
        match d {
            DistributionArg::Gaussian => DistributionKind::Gaussian,
            DistributionArg::LaplaceCopula => DistributionKind::LaplaceCopula,
            DistributionArg::UniformWhite => DistributionKind::UniformWhite,
        }
    }
}

#[derive(Args, Debug)]
pub struct ThresholdArgs {
    /// Dimension.
    #[arg(long)]
    pub d: usize,
    /// Stream length.
    #[arg(long, requires = "k", conflicts_with = "ratio")]
    pub n: Option<usize>,
    /// Label budget.
    #[arg(long, requires = "n")]
    pub k: Option<usize>,
    /// Stream-to-budget ratio n/k, Gaussian methods only.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::GaussianExact)]
    pub method: MethodArg,
    /// Constant C̄ of the closed form.
    #[arg(long, default_value_t = 1.0)]
    pub c_bar: f64,
    /// Whitened covariate law for the CLT and empirical methods.
    #[arg(long, value_enum, default_value_t = DistributionArg::Gaussian)]
    pub distribution: DistributionArg,
    /// Reference sample size for the CLT and empirical methods.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    /// d / ((1−α)² φ k); needs --d --k --phi.
    #[arg(long)]
    pub upper_main: bool,
    /// Gaussian upper bound; needs --d --k --n.
    #[arg(long)]
    pub upper_gaussian: bool,
    /// Sparse stage-2 bound; needs --s --k2 --n2.
    #[arg(long)]
    pub upper_sparse: bool,
    /// Gaussian lower bound; expectation form unless --alpha is given.
    #[arg(long)]
    pub lower_gaussian: bool,
    /// CLT lower bound; needs --d --k --n --spread.
    #[arg(long)]
    pub lower_clt: bool,
    /// Ridge bound for λ* ~ U[0, R]; needs --lambda-min --radius --sigma --d --beta-norm-sq.
    #[arg(long)]
    pub ridge: bool,
    /// Pointwise lower bound d²/Σ‖x̄‖² over whitened rows read from this file.
    #[arg(long)]
    pub pointwise: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Confidence parameter.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Gain factor φ.
    #[arg(long)]
    pub phi: Option<f64>,
    /// Support size.
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long)]
    pub n2: Option<usize>,
    /// CLT spread γ.
    #[arg(long)]
    pub spread: Option<f64>,
    /// Smallest eigenvalue of XᵀX.
    #[arg(long)]
    pub lambda_min: Option<f64>,
    /// Upper end R of the penalty prior.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// ‖β*‖².
    #[arg(long)]
    pub beta_norm_sq: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    /// Stream length.
    #[arg(long)]
    pub n: usize,
    /// Label budget.
    #[arg(long)]
    pub k: usize,
    /// Dimension; inferred from the first row when absent.
    #[arg(long)]
    pub d: Option<usize>,
    /// Fixed threshold Γ with unit weights (Γ = 0 is random sampling).
    #[arg(long, conflicts_with_all = ["method", "adaptive", "online_sigma"])]
    pub gamma: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::GaussianExact)]
    pub method: MethodArg,
    /// Re-solve the threshold before every row from the remaining budget.
    #[arg(long)]
    pub adaptive: bool,
    /// Over-selection factor of the adaptive rule.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Known covariance Σ, one row per line.
    #[arg(long, conflicts_with = "online_sigma")]
    pub sigma_file: Option<PathBuf>,
    /// Estimate Σ from the stream itself (implies --adaptive).
    #[arg(long)]
    pub online_sigma: bool,
    /// Rows between covariance refreshes with --online-sigma.
    #[arg(long, default_value_t = 1)]
    pub refresh_interval: usize,
    /// Whitened covariate law for the CLT and empirical methods.
    #[arg(long, value_enum, default_value_t = DistributionArg::Gaussian)]
    pub distribution: DistributionArg,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum CenteringArg {
    Full,
    Train,
}

impl From<CenteringArg> for Centering {
    fn from(c: CenteringArg) -> Self {
        match c {
            CenteringArg::Full => Centering::Full,
            CenteringArg::Train => Centering::Train,
        }
    }
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub csv: PathBuf,
    /// Response column name.
    #[arg(long)]
    pub response: String,
    #[arg(long, value_enum, default_value_t = CenteringArg::Full)]
    pub centering: CenteringArg,
    /// Fraction of rows used for training.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

/// A usage problem (exit 1) or a library failure (exit 2).
pub enum Failure {
    Usage(String),
    Runtime(oal_core::error::Error),
    /// The reader of stdout went away; not an error for a pipeline filter.
    Closed,
}

impl From<oal_core::error::Error> for Failure {
    fn from(e: oal_core::error::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            Failure::Closed
        } else {
            Failure::Runtime(e.into())
        }
    }
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
    let outcome = match cli.command {
        Command::Experiment(a) => commands::experiment(a),
        Command::Threshold(a) => commands::threshold(a),
        Command::Bounds(a) => commands::bounds(a),
        Command::SelectStream(a) => commands::select_stream(a),
        Command::DatasetCheck(a) => commands::dataset_check(a),
    };
    match outcome {
        Ok(()) | Err(Failure::Closed) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            let msg = serde_json::json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}
