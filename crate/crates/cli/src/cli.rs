//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sdid_core::{CovariateKind, ExtrapolationPolicy, MissingPolicy};

use crate::report::OutputFormat;

#[derive(Parser)]
#[command(
    name = "sdid",
    version,
    about = "Effect modification from pre-post data via subgroup difference-in-differences",
    after_help = "Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.\n\
                  SDID_THREADS caps internal parallelism."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Estimate effect modification between two covariate levels
    Estimate(EstimateArgs),
    /// Test for differential pre-treatment trends across levels
    Pretrends(PretrendsArgs),
    /// Run a Monte Carlo study of the estimator against oracle truth
    Simulate(SimulateArgs),
    /// Validate an input file and report anything excluded
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Categorical,
    Continuous,
}

impl From<KindArg> for CovariateKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Categorical => CovariateKind::Categorical,
            KindArg::Continuous => CovariateKind::Continuous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingArg {
    Strict,
    Drop,
}

impl From<MissingArg> for MissingPolicy {
    fn from(m: MissingArg) -> Self {
        match m {
            MissingArg::Strict => MissingPolicy::Strict,
            MissingArg::Drop => MissingPolicy::Drop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtrapolationArg {
    Strict,
    Warn,
}

impl From<ExtrapolationArg> for ExtrapolationPolicy {
    fn from(e: ExtrapolationArg) -> Self {
        match e {
            ExtrapolationArg::Strict => ExtrapolationPolicy::Strict,
            ExtrapolationArg::Warn => ExtrapolationPolicy::Warn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatArg {
    Json,
    Csv,
    Text,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Text => OutputFormat::PlainText,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormatArg {
    Wide,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorArg {
    /// Subgroup delta means
    Means,
    /// Saturated-indicator delta regression (equivalent route)
    Saturated,
}

#[derive(Args, Serialize)]
pub struct CommonArgs {
    /// Output format
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    /// Write the report here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Strip volatile fields (timestamp) so reruns are byte-identical
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Args, Serialize)]
pub struct EstimateArgs {
    /// CSV input file
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the covariate column
    #[arg(long, default_value = "covariate")]
    pub covariate: String,
    /// Contrast as `A,B`: two labels, or two numbers with --kind continuous
    #[arg(long, conflicts_with = "all_pairs")]
    pub contrast: Option<String>,
    #[arg(long, value_enum, default_value_t = KindArg::Categorical)]
    pub kind: KindArg,
    /// Delta-regression basis: `saturated`, `poly:D`, `spline:K` (K
    /// quantile knots), or `spline:k1,k2,...` (explicit knots)
    #[arg(long)]
    pub basis: Option<String>,
    /// Number of bootstrap replicates
    #[arg(long, value_name = "B")]
    pub bootstrap: Option<usize>,
    /// Bootstrap seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Confidence level
    #[arg(long, default_value_t = 0.95)]
    pub ci: f64,
    /// One contrast per level against --reference
    #[arg(long)]
    pub all_pairs: bool,
    /// Reference level for --all-pairs
    #[arg(long, requires = "all_pairs")]
    pub reference: Option<String>,
    /// Quantile-bin a continuous covariate into K groups first
    #[arg(long, value_name = "K")]
    pub bin: Option<usize>,
    /// Policy for missing covariates and non-finite outcomes
    #[arg(long, value_enum, default_value_t = MissingArg::Strict)]
    pub missing: MissingArg,
    /// Policy for contrast values outside the observed covariate range
    #[arg(long, value_enum, default_value_t = ExtrapolationArg::Strict)]
    pub extrapolation: ExtrapolationArg,
    /// Resample within each contrast level instead of pooled units
    #[arg(long)]
    pub stratified: bool,
    #[arg(long, value_enum, default_value_t = InputFormatArg::Wide)]
    pub input_format: InputFormatArg,
    /// First treated period (required for long input)
    #[arg(long)]
    pub treatment_time: Option<i64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Serialize)]
pub struct PretrendsArgs {
    /// Long CSV input file (`unit_id, <covariate>, time, y`)
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "covariate")]
    pub covariate: String,
    /// First treated period
    #[arg(long)]
    pub treatment_time: i64,
    /// Contrast as `A,B`
    #[arg(long)]
    pub contrast: String,
    /// Rejection threshold for the joint test
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Also emit an event study relative to this pre-treatment period
    #[arg(long)]
    pub base_period: Option<i64>,
    #[arg(long, value_enum, default_value_t = MissingArg::Strict)]
    pub missing: MissingArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Serialize)]
pub struct SimulateArgs {
    /// DGP config file (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// Number of Monte Carlo repetitions
    #[arg(long)]
    pub reps: usize,
    /// Master seed; repetition r derives its own stream from (seed, r)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Contrast as `A,B`; defaults to the first two declared levels
    #[arg(long)]
    pub contrast: Option<String>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Means)]
    pub estimator: EstimatorArg,
    /// Bootstrap replicates per repetition (enables bootstrap coverage)
    #[arg(long, value_name = "B")]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub stratified: bool,
    /// Confidence level for coverage
    #[arg(long, default_value_t = 0.95)]
    pub ci: f64,
    /// Wald rejection threshold
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Write repetition 0's draw to PREFIX.panel.csv (observed data) and
    /// PREFIX.ledger.json (both potential outcomes, audit only)
    #[arg(long, value_name = "PREFIX")]
    pub dump_draw: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Serialize)]
pub struct ValidateArgs {
    /// CSV input file
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "covariate")]
    pub covariate: String,
    #[arg(long, value_enum, default_value_t = KindArg::Categorical)]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value_t = MissingArg::Strict)]
    pub missing: MissingArg,
    #[arg(long, value_enum, default_value_t = InputFormatArg::Wide)]
    pub input_format: InputFormatArg,
    /// Treatment time (required for long input)
    #[arg(long)]
    pub treatment_time: Option<i64>,
    /// Write the validated panel back out as canonical wide CSV
    #[arg(long)]
    pub dump_panel: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}
