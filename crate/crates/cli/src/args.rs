use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ssn", version, about = "Sub-sampled Newton methods for regularized GLMs")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Run one solver on one dataset and write its trace.
    Run(RunArgs),
    /// Run an experiment file and write CSV and JSON results.
    Compare(CompareArgs),
    /// Check a sample-size lemma by resampling.
    Verify(VerifyArgs),
    /// Print curvature constants and rate predictions for a configuration.
    Rates(RatesArgs),
    /// Print dataset size, sparsity and conditioning.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Ridge,
    Logistic,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Svmlight,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReplacementArg {
    With,
    Without,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LemmaArg {
    Hessian,
    Gradient,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = 1.0)]
    pub density: f64,
    /// Target condition number of the data Gram matrix.
    #[arg(long, default_value_t = 1.0)]
    pub condition: f64,
    #[arg(long, value_enum, default_value = "logistic")]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the planted margins.
    #[arg(long, default_value_t = 1.0)]
    pub signal: f64,
    /// Label noise for ridge data.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Output format; inferred from the extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

/// Dataset and objective selection.
#[derive(Debug, Args)]
pub struct DataFlags {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Input format; inferred from the extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Model family; read from the generator's metadata file, else logistic.
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Ridge penalty added to every component.
    #[arg(long, default_value_t = 1e-3)]
    pub reg: f64,
}

/// Solver settings; names mirror the configuration fields.
#[derive(Debug, Args)]
pub struct SolverFlags {
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub eps1: Option<f64>,
    #[arg(long)]
    pub eps2: Option<f64>,
    /// Geometric factor for the eps2 schedule.
    #[arg(long)]
    pub rho2: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub alpha_hat: Option<f64>,
    /// Inexact solves with this residual tolerance.
    #[arg(long)]
    pub theta1: Option<f64>,
    #[arg(long)]
    pub theta2: Option<f64>,
    #[arg(long)]
    pub cg_max_iters: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Hessian sample as a fraction of n, bypassing the lemma.
    #[arg(long)]
    pub sample_frac_h: Option<f64>,
    /// Gradient sample as a fraction of n, bypassing the lemma.
    #[arg(long)]
    pub sample_frac_g: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, value_enum)]
    pub replacement: Option<ReplacementArg>,
    /// Fixed gradient-descent step.
    #[arg(long)]
    pub gd_step: Option<f64>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Ball radius for curvature bounds.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub resample_retries: Option<usize>,
    /// Record sampled-Hessian eigenvalues and full gradient norms.
    #[arg(long)]
    pub diagnostics: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// ssn-hessian, ssn-spectral, ssn-ridge, ssn-full, gd, agd, bfgs, lbfgs[:m], newton
    #[arg(long, default_value = "ssn-hessian")]
    pub solver: String,
    #[command(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    pub solver_flags: SolverFlags,
    /// Trace CSV path.
    #[arg(short, long, default_value = "trace.csv")]
    pub output: PathBuf,
    /// Also write the full trace as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write zero wall times so repeated runs produce identical files.
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Experiment description (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Output prefix; writes PREFIX.csv and PREFIX.json.
    #[arg(short, long, default_value = "experiment")]
    pub output: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub lemma: LemmaArg,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Allowed excess of the failure frequency over delta.
    #[arg(long, default_value_t = 0.02)]
    pub margin: f64,
    #[arg(long, value_enum, default_value = "without")]
    pub replacement: ReplacementArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the evaluation point.
    #[arg(long, default_value_t = 1)]
    pub point_seed: u64,
    /// Dataset; a generated logistic problem when absent.
    #[command(flatten)]
    pub data: DataFlags,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    #[arg(long, default_value = "ssn-hessian")]
    pub solver: String,
    #[command(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    pub solver_flags: SolverFlags,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub data: DataFlags,
    /// Fraction used for the reported sample curvature constant.
    #[arg(long, default_value_t = 0.2)]
    pub sample_frac: f64,
    #[arg(long)]
    pub radius: Option<f64>,
}
