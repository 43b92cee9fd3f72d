//! Experiment configuration and its resolution from defaults, a JSON file and
//! command-line flags (in increasing order of precedence).

use std::path::{Path, PathBuf};

use heatgraph::experiment::{default_true_taus, standard_alpha_grid, standard_beta_grid, SyntheticSpec};
use heatgraph::graphs::GraphModel;
use heatgraph::localization::SweepConfig;
use heatgraph::solver::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rbf,
    Er,
    Ba,
    /// Signals read from a CSV file; no ground truth.
    FromFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph_model: ModelKind,
    pub rbf_sigma: f64,
    pub rbf_kappa: f64,
    pub er_p: f64,
    pub ba_m_attach: usize,
    pub n: usize,
    /// Scales used to generate signals; the model's default when absent.
    pub taus_true: Option<Vec<f64>>,
    pub m_signals: usize,
    pub atoms_per_signal: usize,
    pub noise_std: f64,
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub solver: SolverConfig,
    /// Number of dictionary blocks; the length of the initial scales when absent.
    pub s_scales: Option<usize>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub signals_path: Option<PathBuf>,
    /// Ground-truth Laplacian CSV used to score graphs learned from `signals_path`.
    pub truth_path: Option<PathBuf>,
    /// Write a solver checkpoint every this many iterations.
    pub checkpoint_every: Option<usize>,
    pub localization: SweepConfig,
    /// Sparsity ladder of the approximation-error report in `from_file` mode.
    pub approximation_alphas: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            graph_model: ModelKind::Rbf,
            rbf_sigma: 0.5,
            rbf_kappa: 0.75,
            er_p: 0.2,
            ba_m_attach: 1,
            n: 20,
            taus_true: None,
            m_signals: 100,
            atoms_per_signal: 3,
            noise_std: 0.0,
            alpha_grid: standard_alpha_grid(),
            beta_grid: standard_beta_grid(),
            solver: SolverConfig::default(),
            s_scales: None,
            seeds: (0..10).collect(),
            output_dir: PathBuf::from("heatgraph-out"),
            signals_path: None,
            truth_path: None,
            checkpoint_every: None,
            localization: SweepConfig::default(),
            approximation_alphas: (0..9).map(|k| 10f64.powf(1.0 - 0.5 * k as f64)).collect(),
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub fix_tau: Option<Vec<f64>>,
    pub s_scales: Option<usize>,
    pub signals: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

/// Comma-separated scales given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct TauList(pub Vec<f64>);

/// Parse `"v1,v2,..."`.
pub fn parse_tau_list(s: &str) -> Result<TauList, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(TauList)
}

/// Evenly spaced scales `4 (s + 1) / S` used when only the count is known.
pub fn default_scale_ladder(s: usize) -> Vec<f64> {
    (0..s).map(|k| 4.0 * (k + 1) as f64 / s as f64).collect()
}

impl ExperimentConfig {
    pub fn model(&self) -> Option<GraphModel> {
        match self.graph_model {
            ModelKind::Rbf => Some(GraphModel::Rbf { sigma: self.rbf_sigma, kappa: self.rbf_kappa }),
            ModelKind::Er => Some(GraphModel::Er { p: self.er_p }),
            ModelKind::Ba => Some(GraphModel::Ba { m_attach: self.ba_m_attach }),
            ModelKind::FromFile => None,
        }
    }

    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        let model = self.model()?;
        Some(SyntheticSpec {
            taus_true: self.taus_true.clone().unwrap_or_else(|| default_true_taus(&model)),
            model,
            n: self.n,
            m_signals: self.m_signals,
            atoms_per_signal: self.atoms_per_signal,
            noise_std: self.noise_std,
        })
    }

    /// Load `path` over the defaults (or take the defaults) and apply `flags`.
    pub fn resolve(path: Option<&Path>, flags: &Overrides) -> CliResult<Self> {
        let (mut cfg, explicit_tau) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                let value: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let explicit = value.pointer("/solver/tau_init").is_some();
                let cfg: ExperimentConfig = serde_json::from_value(value)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                (cfg, explicit)
            }
            None => (ExperimentConfig::default(), false),
        };
        cfg.apply(flags, explicit_tau)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, flags: &Overrides, explicit_tau: bool) -> CliResult<()> {
        if let Some(seed) = flags.seed {
            self.seeds = vec![seed];
        }
        if let Some(out) = &flags.output {
            self.output_dir = out.clone();
        }
        if let Some(a) = flags.alpha {
            self.alpha_grid = vec![a];
        }
        if let Some(b) = flags.beta {
            self.beta_grid = vec![b];
        }
        if let Some(p) = &flags.signals {
            self.signals_path = Some(p.clone());
        }
        if let Some(p) = &flags.truth {
            self.truth_path = Some(p.clone());
        }
        if let Some(s) = flags.s_scales {
            self.s_scales = Some(s);
        }
        if let Some(taus) = &flags.fix_tau {
            self.solver.tau_init = taus.clone();
            self.solver.learn_tau = false;
        } else if !explicit_tau {
            let truth = self.synthetic_spec().map(|s| s.taus_true);
            self.solver.tau_init = match (self.s_scales, truth) {
                (Some(s), Some(t)) if t.len() == s => t,
                (Some(s), _) => default_scale_ladder(s),
                (None, Some(t)) => t,
                (None, None) => self.solver.tau_init.clone(),
            };
        }
        match self.s_scales {
            Some(s) if s != self.solver.tau_init.len() => Err(CliError::Config(format!(
                "s_scales = {s} but {} initial scales were given",
                self.solver.tau_init.len()
            ))),
            _ => {
                self.s_scales = Some(self.solver.tau_init.len());
                Ok(())
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.alpha_grid.is_empty() || self.beta_grid.is_empty() {
            return bad("alpha and beta grids must be non-empty".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.s_scales == Some(0) {
            return bad("s_scales must be positive".into());
        }
        self.solver.validate().map_err(|e| CliError::Config(e.to_string()))
    }
}
