//! `pivotfda` command-line interface.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pivotfda::eigensys::DEFAULT_GALERKIN_DIM;
use pivotfda::pivotal::{DEFAULT_PATHS, DEFAULT_SEED, DEFAULT_STEPS};

#[derive(Debug, Parser)]
#[command(name = "pivotfda", version, about = "Relevant-hypothesis tests for functional linear regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One-sample test of H0: ||beta||^2 <= delta, scalar responses.
    TestScalar {
        #[command(flatten)]
        data: OneSample,
        #[command(flatten)]
        test: TestFlags,
    },
    /// One-sample test with functional responses (surface slope).
    TestFunctional {
        #[command(flatten)]
        data: OneSample,
        #[command(flatten)]
        test: TestFlags,
    },
    /// Test of H0: ||beta1 - beta2||^2 <= delta for two independent samples.
    TestTwoSample {
        #[arg(long)]
        x1: PathBuf,
        #[arg(long)]
        y1: PathBuf,
        #[arg(long)]
        x2: PathBuf,
        #[arg(long)]
        y2: PathBuf,
        #[command(flatten)]
        test: TestFlags,
    },
    /// Test of H0: ||beta - beta*||^2 <= delta for a reference slope.
    TestLocation {
        #[command(flatten)]
        data: OneSample,
        /// CSV holding the reference slope as a single curve row.
        #[arg(long)]
        beta_star: PathBuf,
        #[command(flatten)]
        test: TestFlags,
    },
    /// Confidence intervals for ||beta||^2.
    Ci {
        #[command(flatten)]
        data: OneSample,
        /// Treat `y` as curves (functional response).
        #[arg(long)]
        functional: bool,
        /// Expected number of grid points; inferred from the files when absent.
        #[arg(long)]
        grid: Option<usize>,
        #[command(flatten)]
        fit: FitFlags,
        #[command(flatten)]
        pivot: PivotFlags,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        out: OutputFlags,
    },
    /// Quantiles of the pivotal distribution.
    Quantiles {
        #[arg(long, default_value_t = 0.5)]
        nu0: f64,
        #[arg(long = "Q", visible_alias = "q", default_value_t = 25)]
        q: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.90, 0.95, 0.99])]
        levels: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_PATHS)]
        paths: usize,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        pivot_seed: u64,
        #[command(flatten)]
        out: OutputFlags,
    },
    /// Monte-Carlo experiment on a simulated design.
    Simulate {
        #[command(flatten)]
        dgp: DgpFlags,
        #[arg(long, value_enum, default_value_t = Experiment::Rejection)]
        experiment: Experiment,
        #[arg(long, default_value_t = 500)]
        runs: usize,
        /// Comma-separated thresholds; defaults to the true squared norm.
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        fit: FitFlags,
        #[command(flatten)]
        pivot: PivotFlags,
        /// Also write the rejection curve as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        out: OutputFlags,
    },
    /// Write a simulated dataset (x.csv, y.csv, metadata.json) to a directory.
    Generate {
        #[command(flatten)]
        dgp: DgpFlags,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct OneSample {
    /// Predictor curves, one per row.
    #[arg(long)]
    x: PathBuf,
    /// Responses: one scalar per row, or one curve per row.
    #[arg(long)]
    y: PathBuf,
}

#[derive(Debug, Args)]
struct FitFlags {
    #[arg(long, default_value_t = 0.5)]
    nu0: f64,
    #[arg(long = "Q", visible_alias = "q", default_value_t = 25)]
    q: usize,
    /// `gcv` or a non-negative number.
    #[arg(long, default_value = "gcv")]
    lambda: String,
    /// Truncation level; defaults to min(20, n/4).
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_GALERKIN_DIM)]
    galerkin_dim: usize,
}

#[derive(Debug, Args)]
struct PivotFlags {
    #[arg(long, default_value_t = DEFAULT_PATHS)]
    paths: usize,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    steps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pivot_seed: u64,
}

#[derive(Debug, Args)]
struct TestFlags {
    /// Expected number of grid points; inferred from the files when absent.
    #[arg(long)]
    grid: Option<usize>,
    #[command(flatten)]
    fit: FitFlags,
    #[command(flatten)]
    pivot: PivotFlags,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Threshold of the relevant hypothesis.
    #[arg(long)]
    delta: Option<f64>,
    /// Comma-separated thresholds; one decision per value.
    #[arg(long, value_delimiter = ',')]
    delta_sweep: Vec<f64>,
    #[command(flatten)]
    out: OutputFlags,
}

#[derive(Debug, Args)]
struct DgpFlags {
    #[arg(long, value_enum)]
    slope: SlopeArg,
    #[arg(long, value_enum, default_value_t = PredictorArg::Iid)]
    predictor: PredictorArg,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = pivotfda::simharness::DEFAULT_NOISE_RATIO)]
    noise_ratio: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = pivotfda::funcspace::DEFAULT_GRID_POINTS)]
    grid: usize,
}

#[derive(Debug, Args)]
struct OutputFlags {
    /// Write the result here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SlopeArg {
    S1,
    S2,
    F1,
    F2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PredictorArg {
    Fma1,
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Experiment {
    Rejection,
    TwoSample,
    Coverage,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
