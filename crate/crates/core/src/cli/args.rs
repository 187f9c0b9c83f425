use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "krylovrl",
    version,
    about = "Block-QR preconditioned FGMRES with a learned block size"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a linear system and write it as Matrix Market plus a vector file.
    #[command(subcommand)]
    Assemble(AssembleCommand),
    /// Solve a system stored in a Matrix Market file.
    Solve(SolveArgs),
    /// Train a block-size policy with PPO.
    Train(TrainArgs),
    /// Compare constant block sizes (and optionally a policy) on one system.
    Bench(BenchArgs),
    /// Price a European call by implicit finite differences.
    Price(PriceArgs),
}

#[derive(Debug, Subcommand)]
pub enum AssembleCommand {
    /// Mean-variance portfolio KKT system.
    Portfolio(PortfolioArgs),
    /// One implicit Black-Scholes time step.
    Bs(BsAssembleArgs),
}

#[derive(Debug, Args)]
pub struct OutputPrefix {
    /// Writes `<out>.mtx` (matrix) and `<out>.vec` (right-hand side).
    #[arg(long, default_value = "system")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PortfolioArgs {
    /// Number of assets for a generated factor-model covariance.
    #[arg(long, required_unless_present = "sigma_file", conflicts_with = "sigma_file")]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub factors: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Target return; defaults to the mean expected return.
    #[arg(long)]
    pub target: Option<f64>,
    /// Covariance matrix in Matrix Market format instead of a generated one.
    #[arg(long)]
    pub sigma_file: Option<PathBuf>,
    /// Expected returns for `--sigma-file`; drawn from the seed when absent.
    #[arg(long, requires = "sigma_file")]
    pub mu_file: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputPrefix,
}

#[derive(Debug, Clone, Args)]
pub struct BsArgs {
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub rate: f64,
    #[arg(long)]
    pub strike: f64,
    #[arg(long)]
    pub smax: f64,
    /// Number of price subintervals.
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub expiry: f64,
    #[arg(long)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct BsAssembleArgs {
    #[command(flatten)]
    pub bs: BsArgs,
    /// Time level of the unknowns; the known level is the next one.
    #[arg(long)]
    pub time_index: usize,
    #[command(flatten)]
    pub output: OutputPrefix,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 20)]
    pub restart: usize,
    #[arg(long, default_value_t = 200)]
    pub max_cycles: usize,
    /// Write 0 in the elapsed_ms column so that traces are reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct PreconditionerSource {
    /// Constant preconditioner block size.
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Policy file choosing the block size each cycle.
    #[arg(long)]
    pub policy: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Right-hand side vector file; defaults to `A·1`.
    #[arg(long)]
    pub rhs: Option<PathBuf>,
    #[command(flatten)]
    pub source: PreconditionerSource,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Per-cycle trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Solution vector file.
    #[arg(long)]
    pub solution: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyKind {
    Kkt,
    Bs,
    FileDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RewardArg {
    NegativeResidual,
    LogDecrement,
}

#[derive(Debug, Clone, Args)]
pub struct FamilyArgs {
    #[arg(long, value_enum, default_value = "kkt")]
    pub family: FamilyKind,
    /// Assets per KKT problem.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub factors: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Black-Scholes grid: price subintervals.
    #[arg(long, default_value_t = 300)]
    pub m: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 0.25)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub rate: f64,
    #[arg(long, default_value_t = 100.0)]
    pub strike: f64,
    #[arg(long, default_value_t = 300.0)]
    pub smax: f64,
    #[arg(long, default_value_t = 1.0)]
    pub expiry: f64,
    /// Directory of `.mtx` files for `--family file-dir`.
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, default_value_t = 200)]
    pub episodes: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Policy output path; the training log is written to `<out>.log.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log path, overriding the default next to the policy.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "log-decrement")]
    pub reward: RewardArg,
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    #[arg(long, default_value_t = 3e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub episodes_per_update: usize,
    /// Candidate block sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    pub actions: Vec<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    pub hidden: Vec<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// System matrix; when absent a KKT problem is generated from `--n`.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, requires = "matrix")]
    pub rhs: Option<PathBuf>,
    /// Assets of the generated KKT problem.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    pub block_sizes: Vec<usize>,
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Timing repetitions per configuration; the fastest run is reported.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Comparison CSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory receiving one trace CSV per configuration.
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    #[command(flatten)]
    pub bs: BsArgs,
    #[arg(long)]
    pub spot: f64,
    #[command(flatten)]
    pub source: PreconditionerSource,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Cumulative per-step trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}
