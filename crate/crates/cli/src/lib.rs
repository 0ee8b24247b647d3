//! Batch front end: `simulate`, `pipeline`, `diagnostics`, `krige` and
//! `evaluate`, all driven by one TOML run configuration.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use tempfield::trend::TrendMode;

pub use commands::PredictionSource;
pub use config::{LoadedConfig, Overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "tempfield",
    version,
    about = "Spatial prediction of daily temperature at unmonitored stations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic network and write it to the configured data paths.
    Simulate(CommonArgs),
    /// Fit the model, predict the held-out stations and score both methods.
    Pipeline(CommonArgs),
    /// Plot data for a fitted pipeline (needs a previous `pipeline` run).
    Diagnostics(CommonArgs),
    /// Kriging baseline only.
    Krige(CommonArgs),
    /// Score prediction files against the configured observations.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Method label and predictions file; repeatable. Defaults to the
        /// pipeline's prediction files in the output directory.
        #[arg(long = "predictions", value_name = "LABEL=PATH")]
        predictions: Vec<PredictionSource>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output directory, relative to the working directory.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Interval level for both methods.
    #[arg(long)]
    pub level: Option<f64>,
    /// interaction | prism_anomaly
    #[arg(long, value_parser = parse_trend)]
    pub trend: Option<TrendMode>,
    /// Fixed spline smoothing.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Seed of the simulated world.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_kriging: bool,
}

fn parse_trend(s: &str) -> Result<TrendMode, String> {
    match s {
        "interaction" => Ok(TrendMode::Interaction),
        "prism_anomaly" => Ok(TrendMode::PrismAnomaly),
        other => Err(format!("unknown trend '{other}' (interaction | prism_anomaly)")),
    }
}

impl CommonArgs {
    fn load(&self) -> Result<LoadedConfig, CliError> {
        let mut lc = LoadedConfig::load(&self.config)?;
        lc.apply(&Overrides {
            output: self.output.clone(),
            split_seed: self.split_seed,
            n_train: self.n_train,
            level: self.level,
            trend: self.trend,
            lambda: self.lambda,
            simulate_seed: self.seed,
            no_kriging: self.no_kriging,
        })?;
        Ok(lc)
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&a.load()?),
        Command::Pipeline(a) => commands::pipeline(&a.load()?),
        Command::Diagnostics(a) => commands::diagnostics(&a.load()?),
        Command::Krige(a) => commands::krige(&a.load()?),
        Command::Evaluate { common, predictions } => commands::evaluate(&common.load()?, predictions),
    }
}
