//! Command-line front end for the `pickands` crate.

pub mod bench_config;
pub mod commands;
pub mod dataset;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pickands::EstimatorKind;

pub use dataset::Dataset;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "pickands",
    version,
    about = "Madogram estimation of Pickands dependence functions"
)]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, env = "PICKANDS_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a sample from a max-stable model and write it as CSV.
    Simulate(SimulateArgs),
    /// Pilot estimate of A on a simplex lattice.
    Estimate(EstimateArgs),
    /// Shape-constrained Bernstein projection of a pilot estimate.
    Project(ProjectArgs),
    /// Extremal coefficient for every pair of columns.
    Pairwise(PairwiseArgs),
    /// Bootstrap confidence band around the projected estimate.
    Band(BandArgs),
    /// Monte-Carlo benchmark tables.
    Bench(BenchArgs),
    /// Extremal coefficient from an estimate JSON or a data CSV.
    Extremal(ExtremalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    #[value(name = "sl")]
    SymmetricLogistic,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "sl")]
    pub family: FamilyArg,
    /// Dependence parameter alpha' in (0, 1].
    #[arg(long, required_unless_present = "model")]
    pub alpha: Option<f64>,
    #[arg(short = 'd', long, default_value_t = 3)]
    pub dim: usize,
    /// Model specification as JSON, overriding --family/--alpha/--dim.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(short = 'n', long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input CSV with a header row.
    pub input: PathBuf,
    /// Minimum number of usable rows.
    #[arg(long, default_value_t = dataset::DEFAULT_MIN_ROWS)]
    pub min_rows: usize,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "md", value_parser = parse_estimator)]
    pub estimator: EstimatorKind,
    /// Lattice resolution of the evaluation grid.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Output JSON; the grid CSV goes next to it with a .csv extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Pilot JSON written by `estimate`, or a data CSV.
    pub input: PathBuf,
    #[arg(short = 'k', long)]
    pub degree: Option<usize>,
    /// Lattice resolution when estimating from a CSV.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value = "md", value_parser = parse_estimator)]
    pub estimator: EstimatorKind,
    #[arg(long, default_value_t = dataset::DEFAULT_MIN_ROWS)]
    pub min_rows: usize,
    /// Output JSON; the grid CSV goes next to it with a .csv extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairwiseArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(short = 'k', long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BandArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(short = 'k', long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value = "md", value_parser = parse_estimator)]
    pub estimator: EstimatorKind,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = pickands::bootstrap::DEFAULT_REPLICATES)]
    pub boot_reps: usize,
    /// Confidence level 1 - alpha.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output JSON; the grid CSV goes next to it with a .csv extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Mise,
    Improvement,
    Coverage,
    All,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// TOML file with experiment settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    /// alpha' values of the symmetric logistic model (repeatable).
    #[arg(long)]
    pub alpha: Vec<f64>,
    /// Sample sizes (repeatable).
    #[arg(short = 'n', long)]
    pub n: Vec<usize>,
    #[arg(short = 'd', long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub boot_reps: Option<usize>,
    #[arg(short = 'k', long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Estimators (repeatable).
    #[arg(long, value_parser = parse_estimator)]
    pub estimator: Vec<EstimatorKind>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// 1000 Monte-Carlo repetitions and 500 bootstrap replicates.
    #[arg(long)]
    pub full_scale: bool,
    /// Output CSV table (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtremalArgs {
    /// Estimate JSON written by `project`, or a data CSV.
    pub input: PathBuf,
    #[arg(short = 'k', long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value = "md", value_parser = parse_estimator)]
    pub estimator: EstimatorKind,
    #[arg(long, default_value_t = dataset::DEFAULT_MIN_ROWS)]
    pub min_rows: usize,
}

fn parse_estimator(s: &str) -> Result<EstimatorKind, String> {
    s.parse().map_err(|e: pickands::Error| e.to_string())
}

/// Invalid flag values or combinations detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Input files that cannot be used.
#[derive(Debug)]
pub struct DataError(pub String);

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<DataError>() {
            return EXIT_DATA;
        }
        if let Some(e) = cause.downcast_ref::<pickands::Error>() {
            return match e {
                e if e.is_numerical() => EXIT_NUMERICAL,
                pickands::Error::Domain(_)
                | pickands::Error::LengthMismatch { .. }
                | pickands::Error::TooFewReplicates { .. } => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(UsageError("thread count must be positive".into()).into());
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Estimate(args) => commands::estimate(&args),
        Command::Project(args) => commands::project(&args),
        Command::Pairwise(args) => commands::pairwise(&args),
        Command::Band(args) => commands::band(&args),
        Command::Bench(args) => commands::bench(&args),
        Command::Extremal(args) => commands::extremal(&args),
    }
}
