use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "crc-causal",
    version,
    about = "Treatment-effect estimation from an observational cohort plus a randomized anchor sample",
    after_help = "\
Examples:
  crc-causal estimate --cells tunisia.json --method rs --arm A
  crc-causal estimate --cells tunisia.json --method crc --arm B --bayes-draws 1000 --seed 7
  crc-causal simulate --scenario scenario.json --reps 2000 --seed 42 --out summary.csv
  crc-causal example tunisia --seed 7 --format table

Exit status: 0 success, 2 input error, 3 estimation degeneracy, 4 internal error."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Master seed; required by every command that draws random numbers
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Interval level
    #[arg(long, global = true, default_value_t = 0.95)]
    pub level: f64,

    /// Write output here instead of stdout; the run manifest goes to <out>.manifest.json
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Cap on worker threads for replicate loops
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output format (default: csv for simulate, json otherwise)
    #[arg(long, global = true, value_enum, ignore_case = true)]
    pub format: Option<Format>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    /// Aligned text for reading in a terminal
    Table,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate arm means and the treatment effect from observed data
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study on a simulated population
    Simulate(SimulateArgs),
    /// Run every estimator on a built-in data set
    Example(ExampleArgs),
    /// Check an input file against its schema without estimating
    Validate(ValidateArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodArg {
    /// Response rate in the randomized sample only
    Rs,
    /// Two-sample capture-recapture on the condensed table
    Chapman,
    /// Full 17-cell capture-recapture estimator
    Crc,
    /// Condensed-table estimator with estimated sampling fraction
    PsiHat,
    /// Unswitched Stream-1 members only
    Naive,
    /// Direct standardization (continuous outcome)
    Standardized,
    /// Stream-2 mean (continuous outcome)
    Stream2,
    /// Stream-1 mean (continuous outcome)
    Stream1,
    /// Every method for the outcome type
    All,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetArg {
    A,
    B,
    Ate,
    All,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutcomeArg {
    #[default]
    Binary,
    Continuous,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaModeArg {
    /// Propagate the eight closed-form MLE variances
    #[default]
    Parameter,
    /// Full multinomial covariance over the 17 cells
    Multinomial,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["cells", "records"]))]
pub struct EstimateArgs {
    /// JSON file with `n_tot` and the 17 `cells`
    #[arg(long)]
    pub cells: Option<PathBuf>,

    /// CSV of individual records (id,stratum,s1,t1,s2,t2,y,y_cont)
    #[arg(long)]
    pub records: Option<PathBuf>,

    /// Population size for --records (default: number of records)
    #[arg(long, requires = "records")]
    pub n_tot: Option<u64>,

    /// Outcome analysed from --records
    #[arg(long, value_enum, default_value_t)]
    pub outcome: OutcomeArg,

    #[arg(long, value_enum, value_delimiter = ',', default_value = "all", ignore_case = true)]
    pub method: Vec<MethodArg>,

    #[arg(long, value_enum, value_delimiter = ',', default_value = "all", ignore_case = true)]
    pub arm: Vec<TargetArg>,

    /// Posterior draws for credible intervals (CRC and psi-hat)
    #[arg(long)]
    pub bayes_draws: Option<usize>,

    /// Bootstrap resamples for continuous-outcome intervals
    #[arg(long)]
    pub bootstrap: Option<usize>,

    #[arg(long, value_enum, default_value_t)]
    pub delta_mode: DeltaModeArg,

    /// Treat the two CRC arm estimates as independent when forming the ATE variance
    #[arg(long)]
    pub independent_ate: bool,

    /// Also write posterior draws as tidy CSV
    #[arg(long, requires = "bayes_draws")]
    pub draws_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario JSON; absent keys take the reference-scenario defaults
    #[arg(long)]
    pub scenario: Option<PathBuf>,

    #[arg(long, default_value_t = 2000)]
    pub reps: usize,

    /// Methods to score (default: all for the scenario's outcome type)
    #[arg(long, value_enum, value_delimiter = ',', ignore_case = true)]
    pub methods: Vec<MethodArg>,

    #[arg(long, default_value_t = 1000)]
    pub bayes_draws: usize,

    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,

    /// Also write every replicate's estimates as tidy CSV
    #[arg(long)]
    pub replicates_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExampleArgs {
    /// Built-in data set
    pub name: String,

    #[arg(long, default_value_t = 1000)]
    pub bayes_draws: usize,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["cells", "records", "scenario"]))]
pub struct ValidateArgs {
    #[arg(long)]
    pub cells: Option<PathBuf>,

    #[arg(long)]
    pub records: Option<PathBuf>,

    #[arg(long, requires = "records")]
    pub n_tot: Option<u64>,

    #[arg(long)]
    pub scenario: Option<PathBuf>,
}
