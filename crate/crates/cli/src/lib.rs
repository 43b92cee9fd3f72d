//! Command-line driver for the heat-diffusion graph learner.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_tau_list, ExperimentConfig, Overrides, TauList};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "heatgraph", version, about = "Learn graph Laplacians from heat-diffusion signals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic ground-truth graphs, signals and codes.
    Generate(Shared),
    /// Learn graphs over the alpha/beta grid and every seed.
    Learn {
        #[command(flatten)]
        shared: Shared,
        /// Signal matrix CSV (N rows, one column per signal).
        #[arg(long)]
        signals: Option<PathBuf>,
        /// Ground-truth Laplacian CSV used to score learned graphs.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Source localization sweep over the graphs of a previous `learn`.
    Localize(Shared),
    /// Compare a learned Laplacian CSV with a ground-truth one.
    Eval {
        learned: PathBuf,
        truth: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        /// Also write the report here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Shared {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run a single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (HEATGRAPH_JOBS takes precedence).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Single alpha instead of the grid.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Single beta instead of the grid.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Fixed scales, e.g. "2.5,4"; disables scale learning.
    #[arg(long, value_parser = parse_tau_list)]
    pub fix_tau: Option<TauList>,
    #[arg(long)]
    pub s_scales: Option<usize>,
}

impl Shared {
    fn resolve(&self, signals: Option<PathBuf>, truth: Option<PathBuf>) -> CliResult<ExperimentConfig> {
        let flags = Overrides {
            seed: self.seed,
            output: self.output.clone(),
            alpha: self.alpha,
            beta: self.beta,
            fix_tau: self.fix_tau.clone().map(|t| t.0),
            s_scales: self.s_scales,
            signals,
            truth,
        };
        ExperimentConfig::resolve(self.config.as_deref(), &flags)
    }

    fn jobs(&self) -> CliResult<Option<usize>> {
        match std::env::var("HEATGRAPH_JOBS") {
            Ok(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("HEATGRAPH_JOBS must be a count, got {v:?}"))),
            Err(_) => Ok(self.jobs),
        }
    }

    fn in_pool<T: Send>(&self, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs()? {
            if j == 0 {
                return Err(CliError::Config("jobs must be positive".into()));
            }
            builder = builder.num_threads(j);
        }
        let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
        pool.install(f)
    }
}

/// Execute a parsed command; returns the text to print on stdout.
pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Generate(shared) => {
            let cfg = shared.resolve(None, None)?;
            commands::generate(&cfg)?;
            Ok(format!("wrote {} seed(s) to {}", cfg.seeds.len(), cfg.output_dir.display()))
        }
        Command::Learn { shared, signals, truth } => {
            let cfg = shared.resolve(signals, truth)?;
            let summary = shared.in_pool(|| commands::learn(&cfg))?;
            Ok(match summary.best {
                Some(b) => format!(
                    "best alpha={:e} beta={:e} f_measure={:.4} ({} cells)",
                    b.alpha,
                    b.beta,
                    b.f_measure,
                    summary.cells.len()
                ),
                None => format!("learned {} cells (no ground truth)", summary.cells.len()),
            })
        }
        Command::Localize(shared) => {
            let cfg = shared.resolve(None, None)?;
            let report = shared.in_pool(|| commands::localize(&cfg))?;
            Ok(format!(
                "{} rows, trend_decreasing={}",
                report.rows.len(),
                report.trend_decreasing()
            ))
        }
        Command::Eval { learned, truth, threshold, output } => {
            let report = commands::eval(&learned, &truth, threshold, output.as_deref())?;
            Ok(report.to_json()?)
        }
    }
}
