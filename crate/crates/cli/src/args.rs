use std::path::PathBuf;

use anyhow::{Context, Result};
use bart_rdd::{Estimator, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "bart-rdd",
    version,
    about = "BART for sharp regression discontinuity designs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one estimator to a CSV and write posterior draws and summaries.
    Fit(FitArgs),
    /// Run replicated estimator comparisons on the benchmark design.
    Simulate(SimulateArgs),
    /// Rank constraint settings on synthetic outcomes over the observed design.
    Elicit(ElicitArgs),
    /// Summarize the unit-level draws of an earlier fit.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML file with sampler and constraint settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "bart-rdd-out")]
    pub out_dir: PathBuf,
    /// Root seed; drawn at random and recorded when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for replications and grid cells.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl CommonArgs {
    pub fn run_config(&self) -> Result<RunConfig> {
        match &self.config {
            Some(path) => RunConfig::load(path)
                .with_context(|| format!("loading configuration {}", path.display())),
            None => Ok(RunConfig::default()),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long, conflicts_with = "demo")]
    pub data: Option<PathBuf>,
    /// Use the bundled demo sample instead of --data.
    #[arg(long)]
    pub demo: bool,
    #[arg(long, default_value = "y")]
    pub outcome: String,
    #[arg(long, default_value = "x")]
    pub running: String,
    /// Covariate columns; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub cutoff: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "bart-rdd")]
    pub estimator: Estimator,
    /// Credible level of the reported intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Re-check every retained tree against the strip constraint.
    #[arg(long)]
    pub audit: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Estimators to compare; repeat the flag for several.
    #[arg(long = "estimator", default_values = ["bart-rdd", "s-bart", "t-bart"])]
    pub estimators: Vec<Estimator>,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.5])]
    pub tau_bar: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.25])]
    pub delta_mu: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3])]
    pub delta_tau: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ElicitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.15, 0.2])]
    pub h: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10])]
    pub n_omin: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.6, 0.75, 0.9])]
    pub alpha: Vec<f64>,
    /// Synthetic outcomes per grid cell.
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// Flag an h stratum whose RMSE spread exceeds this multiple of the
    /// chosen cell's stratum spread.
    #[arg(long, default_value_t = 3.0)]
    pub spread_multiple: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SummarizeArgs {
    /// Output directory of an earlier `fit`.
    #[arg(long)]
    pub fit_dir: PathBuf,
    /// Defaults to the fit directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub max_depth: usize,
    /// Minimum units per summary-tree leaf; defaults to 5% of the units.
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Subgroup as comma-separated conditions, e.g. `w3==1,w2<=0`.
    #[arg(long)]
    pub group: Option<String>,
    /// Comparison group; defaults to the complement of --group.
    #[arg(long, requires = "group")]
    pub versus: Option<String>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}
