//! Command-line front end: simulate scenarios, fit the model, score results,
//! and tabulate prior diagnostics.
//!
//! Output files are deterministic for a given seed, config and input; wall
//! time is written to a separate `runtime.json` so everything else can be
//! compared byte for byte.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lldpm_core::sampler::{SirWeights, SweepOrder};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "LLDPM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "lldpm", version, about = "Local level dynamic partition model")]
pub struct Cli {
    /// Worker threads; defaults to $LLDPM_THREADS, then all cores. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic data set with its ground truth.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Fit the model and write posterior summaries.
    Fit(FitArgs),
    /// Score fitted runs against simulated ground truth.
    Metrics(MetricsArgs),
    /// Expected Rand index of the prior: closed form, Monte Carlo and lagged ARI.
    Eri(EriArgs),
    /// Two views of the same units: probability that their partitions differ.
    Twoview(TwoviewArgs),
    /// Smooth, downsample, square-root and standardise raw series.
    Preprocess(PreprocessArgs),
}

#[derive(Debug, Args)]
pub struct SimCommon {
    /// Output directory for data.csv and truth.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Replicates with seeds seed, seed + 1, ...; written to rep001, rep002, ... when above 1.
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Piecewise-constant partitions with fresh cluster means at every time.
    Independent {
        #[command(flatten)]
        common: SimCommon,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long = "T", visible_alias = "horizon", default_value_t = 100)]
        horizon: usize,
        #[arg(long)]
        blocks: Option<usize>,
        #[arg(long)]
        min_block: Option<usize>,
        #[arg(long)]
        mean_sd: Option<f64>,
        #[arg(long)]
        noise_var: Option<f64>,
    },
    /// Autoregressive series with one or two clusters per time.
    Ar1 {
        #[command(flatten)]
        common: SimCommon,
        #[arg(long, default_value_t = lldpm_core::synth::AR1_DEFAULT_N)]
        n: usize,
        #[arg(long = "T", visible_alias = "horizon", default_value_t = lldpm_core::synth::AR1_DEFAULT_T)]
        horizon: usize,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        noise_sd: Option<f64>,
    },
}

/// Model flags shared by `fit` and `twoview`.
#[derive(Debug, Default, Args)]
pub struct ModelArgs {
    #[arg(long, conflicts_with = "expected_clusters")]
    pub theta: Option<f64>,
    /// Prior expected clusters per time; theta is solved from it.
    #[arg(long)]
    pub expected_clusters: Option<f64>,
    /// Discount of the two-parameter base law (0 for the plain CRP).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub eta_a: Option<f64>,
    #[arg(long)]
    pub eta_b: Option<f64>,
    /// Noise variance.
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Variance of the cluster means.
    #[arg(long)]
    pub sigma02: Option<f64>,
    #[arg(long)]
    pub mu0: Option<f64>,
    #[arg(long, value_enum)]
    pub hyper: Option<config::HyperMode>,
}

/// Sampler flags shared by `fit` and `twoview`.
#[derive(Debug, Default, Args)]
pub struct SamplerArgs {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Partitions stored per time in the catalogues.
    #[arg(long)]
    pub catalogue_size: Option<usize>,
    #[arg(long)]
    pub catalogue_burnin: Option<usize>,
    /// Prior partitions used for the marginal likelihood estimates.
    #[arg(long)]
    pub marginal_samples: Option<usize>,
    #[arg(long)]
    pub sir_candidates: Option<usize>,
    #[arg(long, value_parser = parse_sir)]
    pub sir_weights: Option<SirWeights>,
    #[arg(long, value_parser = parse_order)]
    pub sweep_order: Option<SweepOrder>,
    /// Run in blocks of this many sweeps.
    #[arg(long)]
    pub block_iterations: Option<usize>,
}

fn parse_sir(s: &str) -> Result<SirWeights, String> {
    match s {
        "literal" => Ok(SirWeights::Literal),
        "corrected" => Ok(SirWeights::Corrected),
        _ => Err(format!("expected literal or corrected, got {s:?}")),
    }
}

fn parse_order(s: &str) -> Result<SweepOrder, String> {
    match s {
        "ascending" => Ok(SweepOrder::Ascending),
        "random" => Ok(SweepOrder::Random),
        _ => Err(format!("expected ascending or random, got {s:?}")),
    }
}

#[derive(Debug, Default, Args)]
pub struct FitArgs {
    /// Data CSV: rows are units, columns are times.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// TOML config, or a JSON config or run summary.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Data holds (unit, time, value) triples.
    #[arg(long)]
    pub long: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Control the marginal FDR instead of the non-marginal one.
    #[arg(long)]
    pub marginal: bool,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Also write per-time posterior similarity matrices.
    #[arg(long)]
    pub similarity: bool,
    /// Skip trace.csv.
    #[arg(long)]
    pub no_trace: bool,
    /// Checkpoint written after every block; an existing file is resumed.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Ground-truth JSON written by `simulate`; repeat once per replicate.
    #[arg(long, required = true)]
    pub truth: Vec<PathBuf>,
    /// Output directory of `fit`, paired with the `--truth` at the same position.
    #[arg(long, required = true)]
    pub fit: Vec<PathBuf>,
    /// Directory for metrics.csv and ari.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EriArgs {
    #[arg(long)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long)]
    pub eta: f64,
    /// Lags to tabulate; repeat the flag for several.
    #[arg(long = "lag", default_values_t = [1usize, 2, 3, 4, 5])]
    pub lags: Vec<usize>,
    /// Units per partition for the Monte Carlo columns.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Monte Carlo draws; 0 prints the closed form only.
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write the mean lagged-ARI matrix over this many times to `--matrix`.
    #[arg(long, requires = "horizon")]
    pub matrix: Option<PathBuf>,
    #[arg(long = "T", visible_alias = "horizon", id = "horizon")]
    pub horizon: Option<usize>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct TwoviewArgs {
    /// CSV with one row per unit: view1,view2, or stratum,view1,view2 with --stratified.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub stratified: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw series, one row per unit.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub stride: usize,
    /// 0-based index of the first kept point after smoothing.
    #[arg(long, default_value_t = 0)]
    pub offset: usize,
}

/// Thread count from the flag, then the environment.
pub fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(v.trim().parse::<usize>().map_err(|_| {
                CliError::Usage(format!("{THREADS_ENV} must be a positive integer; got {v:?}"))
            })?),
            _ => None,
        },
    };
    if n == Some(0) {
        return Err(CliError::Usage("thread count must be positive".into()));
    }
    Ok(n)
}

/// Run a parsed command, printing tables to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Simulate(c) => commands::simulate::run(c, out),
        Command::Fit(a) => commands::fit::run(a, out),
        Command::Metrics(a) => commands::metrics::run(a, out),
        Command::Eri(a) => commands::eri::run(a, out),
        Command::Twoview(a) => commands::twoview::run(a, out),
        Command::Preprocess(a) => commands::preprocess::run(a, out),
    }
}
