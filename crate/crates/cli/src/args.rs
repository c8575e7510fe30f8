use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  configuration error: unknown flag or config key, or a value out of range
  3  input/output error: unreadable or malformed data, unwritable output
  4  experiment error: a fit failed or no repetition produced results

Settings come from flags, then the --config file, then built-in defaults.";

#[derive(Parser, Debug)]
#[command(
    name = "pathavg",
    version,
    about = "Model averaging along lasso and SLOPE solution paths",
    after_help = EXIT_CODES
)]
pub struct Cli {
    /// Worker threads for repetitions [default: available processors]
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit the six prediction methods on a data file and write coefficients
    #[command(after_help = EXIT_CODES)]
    Fit(FitArgs),
    /// Relative risk of nested averaging when noise columns come first
    #[command(after_help = EXIT_CODES)]
    Ordering(OrderingArgs),
    /// Empirical risk of the simulation methods along one factor
    #[command(after_help = EXIT_CODES)]
    Sweep(SweepArgs),
    /// Test-set prediction error over repeated train/test splits
    #[command(after_help = EXIT_CODES)]
    Crime(CrimeArgs),
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// File of `key = value` lines (flag names as keys, `#` comments)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Base seed; repetition r uses stream r [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; the summary is written next to it as <name>_summary.csv
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct Fitting {
    /// Cross-validation folds [default: 10]
    #[arg(long)]
    pub folds: Option<usize>,
    /// SLOPE penalty scale: anchored, noise, unit-noise or a positive number [default: anchored]
    #[arg(long, value_name = "RULE")]
    pub slope_scale: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct Repeats {
    /// Repetitions per level [default: 1000, crime 500]
    #[arg(long)]
    pub reps: Option<usize>,
    /// Also write one <name>_curve_<method>.csv per method (summary schema)
    #[arg(long)]
    pub emit_curves: bool,
}

#[derive(Args, Debug, Default)]
pub struct Design {
    /// Observations [default: 500]
    #[arg(long)]
    pub n: Option<usize>,
    /// Predictors [default: 150 for ordering, 600 for sweep]
    #[arg(long)]
    pub p: Option<usize>,
    /// Nonzero coefficients [default: 20 for ordering, 100 for sweep]
    #[arg(long)]
    pub s: Option<usize>,
    /// Correlation parameter [default: 0.1]
    #[arg(long)]
    pub rho: Option<f64>,
    /// Population R-squared [default: 0.5]
    #[arg(long)]
    pub r2: Option<f64>,
    /// Coefficient decay exponent [default: 0.5]
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Comma-separated data file
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Schema naming the columns, identifiers and target
    #[arg(long, value_name = "FILE")]
    pub schema: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub fitting: Fitting,
}

#[derive(Args, Debug)]
pub struct OrderingArgs {
    #[command(flatten)]
    pub design: Design,
    /// Noise columns placed before the signal, comma-separated [default: 0,10,20,30,40,50]
    #[arg(long, value_name = "LIST")]
    pub l: Option<String>,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub repeats: Repeats,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Factor to vary: n, r2, p, rho, s or delta
    #[arg(long)]
    pub factor: Option<String>,
    /// Covariance: cs (compound symmetry) or ar (auto-regressive) [default: ar]
    #[arg(long)]
    pub cov: Option<String>,
    /// Levels of the factor, comma-separated [default: the factor's standard grid]
    #[arg(long, value_name = "LIST")]
    pub levels: Option<String>,
    #[command(flatten)]
    pub design: Design,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub repeats: Repeats,
    #[command(flatten)]
    pub fitting: Fitting,
}

#[derive(Args, Debug)]
pub struct CrimeArgs {
    /// Comma-separated data file
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Schema naming the columns, identifiers and target
    #[arg(long, value_name = "FILE")]
    pub schema: Option<PathBuf>,
    /// Training fractions, comma-separated [default: 0.3,0.4,...,0.9]
    #[arg(long, value_name = "LIST")]
    pub tr: Option<String>,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub repeats: Repeats,
    #[command(flatten)]
    pub fitting: Fitting,
}
