//! Synthetic recovery experiments: draw a ground-truth graph and diffused
//! signals, learn a graph back over a grid of regularization weights, and
//! score it.

use serde::{Deserialize, Serialize};

use crate::dictionary::{build_dictionary, generate_synthetic_signals, SignalMatrix, SparseCodes, TauVector};
use crate::error::{Error, Result};
use crate::graphs::{laplacian_from_weights, normalize_trace, GraphModel, LaplacianMatrix, WeightMatrix};
use crate::metrics::EdgeRecoveryReport;
use crate::rng::derive_seed;
use crate::solver::{learn, LearnOutput, SolverConfig};
use crate::spectral::eig_sym;

/// `10^{1}, 10^{0.5}, ..., 10^{-6}`.
pub fn standard_alpha_grid() -> Vec<f64> {
    (0..15).map(|k| 10f64.powf(1.0 - 0.5 * k as f64)).collect()
}

/// `1, 0.1, 0.01`.
pub fn standard_beta_grid() -> Vec<f64> {
    vec![1.0, 0.1, 0.01]
}

/// Scales used to generate signals for each model.
pub fn default_true_taus(model: &GraphModel) -> Vec<f64> {
    match model {
        GraphModel::Ba { .. } => vec![1.0, 4.0],
        _ => vec![2.5, 4.0],
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub model: GraphModel,
    pub n: usize,
    pub taus_true: Vec<f64>,
    pub m_signals: usize,
    pub atoms_per_signal: usize,
    pub noise_std: f64,
}

impl SyntheticSpec {
    /// 20 vertices, 100 noiseless signals of 3 atoms each.
    pub fn standard(model: GraphModel) -> Self {
        Self {
            taus_true: default_true_taus(&model),
            model,
            n: 20,
            m_signals: 100,
            atoms_per_signal: 3,
            noise_std: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub weights: WeightMatrix,
    /// Trace-normalized ground truth.
    pub laplacian: LaplacianMatrix,
    pub signals: SignalMatrix,
    pub codes: SparseCodes,
}

/// Seeds of the graph, the signals and the solver's initial Laplacian for a run seed.
pub fn split_seed(seed: u64) -> (u64, u64, u64) {
    (derive_seed(seed, 0), derive_seed(seed, 1), derive_seed(seed, 2))
}

pub fn generate_instance(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticInstance> {
    let (graph_seed, signal_seed, _) = split_seed(seed);
    let weights = spec.model.generate(spec.n, graph_seed)?;
    let laplacian = normalize_trace(&laplacian_from_weights(&weights))?;
    let dict = build_dictionary(eig_sym(laplacian.as_matrix())?, TauVector::new(spec.taus_true.clone())?);
    let (signals, codes) =
        generate_synthetic_signals(&dict, spec.m_signals, spec.atoms_per_signal, spec.noise_std, signal_seed)?;
    Ok(SyntheticInstance { weights, laplacian, signals, codes })
}

#[derive(Debug, Clone)]
pub struct CellRun {
    pub output: LearnOutput,
    pub report: EdgeRecoveryReport,
}

/// Learn on one instance with the given weights; the initial Laplacian is
/// drawn from the run seed.
pub fn run_cell(
    instance: &SyntheticInstance,
    base: &SolverConfig,
    alpha: f64,
    beta: f64,
    seed: u64,
) -> Result<CellRun> {
    let cfg = SolverConfig { alpha, beta, rng_seed: split_seed(seed).2, ..base.clone() };
    let output = learn(&instance.signals, &cfg, None)?;
    let report = EdgeRecoveryReport::evaluate(&output.laplacian, &instance.laplacian, cfg.laplacian_threshold)?;
    Ok(CellRun { output, report })
}

/// Reports of all seeds for one `(alpha, beta)` pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub alpha: f64,
    pub beta: f64,
    pub reports: Vec<EdgeRecoveryReport>,
}

impl GridCell {
    /// Field-wise mean over seeds.
    pub fn mean(&self) -> EdgeRecoveryReport {
        mean_report(&self.reports)
    }
}

pub fn mean_report(reports: &[EdgeRecoveryReport]) -> EdgeRecoveryReport {
    let k = reports.len().max(1) as f64;
    let avg = |f: fn(&EdgeRecoveryReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    EdgeRecoveryReport {
        precision: avg(|r| r.precision),
        recall: avg(|r| r.recall),
        f_measure: avg(|r| r.f_measure),
        nmi: avg(|r| r.nmi),
        l2_weight_error: avg(|r| r.l2_weight_error),
    }
}

/// Index of the cell with the highest mean F-measure; the first one wins ties.
pub fn best_cell(cells: &[GridCell]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cells.iter().enumerate() {
        let f = c.mean().f_measure;
        if best.is_none_or(|(_, b)| f > b) {
            best = Some((i, f));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridResult {
    /// Alpha outer, beta inner.
    pub cells: Vec<GridCell>,
    pub best: usize,
}

impl GridResult {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }
}

/// Learn on every seed's instance for every `(alpha, beta)` pair.
pub fn grid_search(
    spec: &SyntheticSpec,
    base: &SolverConfig,
    alphas: &[f64],
    betas: &[f64],
    seeds: &[u64],
) -> Result<GridResult> {
    if alphas.is_empty() || betas.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidInput("grids and seed list must be non-empty".into()));
    }
    let instances = seeds
        .iter()
        .map(|&s| generate_instance(spec, s))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::with_capacity(alphas.len() * betas.len());
    for &alpha in alphas {
        for &beta in betas {
            let reports = instances
                .iter()
                .zip(seeds)
                .map(|(inst, &s)| run_cell(inst, base, alpha, beta, s).map(|r| r.report))
                .collect::<Result<Vec<_>>>()?;
            cells.push(GridCell { alpha, beta, reports });
        }
    }
    let best = best_cell(&cells).expect("grid is non-empty");
    Ok(GridResult { cells, best })
}
