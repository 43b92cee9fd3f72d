//! The four subcommands. Every function takes a fully resolved configuration.

use std::path::{Path, PathBuf};

use heatgraph::dictionary::{build_dictionary, SignalMatrix};
use heatgraph::experiment::{generate_instance, mean_report, split_seed};
use heatgraph::graphs::LaplacianMatrix;
use heatgraph::io::{
    read_dense_csv, read_json, write_dense_csv, write_edge_list, write_json, Checkpoint,
};
use heatgraph::localization::{ista, localization_sweep_pairs, IstaConfig, SweepReport};
use heatgraph::metrics::EdgeRecoveryReport;
use heatgraph::solver::{learn_with_observer, SolverConfig, SolverState};
use heatgraph::spectral::eig_sym;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelKind};
use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Written next to every artifact tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
}

fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig) -> CliResult<()> {
    let manifest = Manifest {
        version: VERSION.to_string(),
        command: command.to_string(),
        seeds: cfg.seeds.clone(),
        config: cfg.clone(),
    };
    write_json(dir.join("manifest.json"), &manifest)?;
    Ok(())
}

fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

/// Write the ground truth and signals of every seed.
pub fn generate(cfg: &ExperimentConfig) -> CliResult<()> {
    let spec = cfg
        .synthetic_spec()
        .ok_or_else(|| CliError::Config("generate needs a synthetic graph_model".into()))?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    for &seed in &cfg.seeds {
        let inst = generate_instance(&spec, seed)?;
        let dir = seed_dir(&cfg.output_dir, seed);
        std::fs::create_dir_all(&dir)?;
        write_edge_list(dir.join("graph.csv"), &inst.weights)?;
        write_dense_csv(dir.join("laplacian.csv"), inst.laplacian.as_matrix())?;
        write_dense_csv(dir.join("signals.csv"), inst.signals.as_matrix())?;
        write_dense_csv(dir.join("codes.csv"), inst.codes.as_matrix())?;
    }
    write_manifest(&cfg.output_dir, "generate", cfg)
}

/// One row of the sparse approximation report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproximationRow {
    pub alpha: f64,
    pub nnz: usize,
    pub error: f64,
}

/// Contents of a cell's `result.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub taus: Vec<f64>,
    pub final_objective: f64,
    pub report: Option<EdgeRecoveryReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub alpha: f64,
    pub beta: f64,
    /// Cell directories relative to `cells/`, in seed order.
    pub dirs: Vec<String>,
    /// Mean over seeds; absent without ground truth.
    pub mean: Option<EdgeRecoveryReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestCell {
    pub alpha: f64,
    pub beta: f64,
    pub index: usize,
    pub f_measure: f64,
    pub report: EdgeRecoveryReport,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnSummary {
    pub version: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellSummary>,
    pub best: Option<BestCell>,
}

pub fn cell_dir_name(alpha: f64, beta: f64, seed: u64) -> String {
    format!("alpha-{alpha:.4e}_beta-{beta:.4e}_seed-{seed}")
}

/// Signals and optional truth for one seed.
struct Problem {
    seed: u64,
    signals: SignalMatrix,
    truth: Option<LaplacianMatrix>,
}

fn read_laplacian(path: &Path) -> CliResult<LaplacianMatrix> {
    Ok(LaplacianMatrix::new(read_dense_csv(path)?)?)
}

fn load_problems(cfg: &ExperimentConfig) -> CliResult<Vec<Problem>> {
    if let Some(path) = &cfg.signals_path {
        let signals = SignalMatrix::new(read_dense_csv(path)?)?;
        let truth = cfg.truth_path.as_deref().map(read_laplacian).transpose()?;
        if let Some(t) = &truth {
            if t.n() != signals.n() {
                return Err(heatgraph::Error::DimensionMismatch(format!(
                    "truth has {} vertices, signals have {}",
                    t.n(),
                    signals.n()
                ))
                .into());
            }
        }
        return Ok(cfg
            .seeds
            .iter()
            .map(|&seed| Problem { seed, signals: signals.clone(), truth: truth.clone() })
            .collect());
    }
    let spec = cfg.synthetic_spec().ok_or_else(|| {
        CliError::Config("graph_model from_file needs signals_path (or --signals)".into())
    })?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            let inst = generate_instance(&spec, seed)?;
            Ok(Problem { seed, signals: inst.signals, truth: Some(inst.laplacian) })
        })
        .collect()
}

fn checkpoint(dir: &Path, state: &SolverState) -> heatgraph::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_dense_csv(dir.join("laplacian.csv"), state.l.as_matrix())?;
    write_dense_csv(dir.join("codes.csv"), state.h.as_matrix())?;
    let c = Checkpoint {
        iteration: state.iteration,
        objective_history: state.objective_history.clone(),
        taus: state.taus().as_slice().to_vec(),
        laplacian_csv_path: "laplacian.csv".into(),
        sparse_codes_csv_path: "codes.csv".into(),
    };
    write_json(dir.join("checkpoint.json"), &c)
}

/// `||X - D H||_F^2` of ISTA codes on the learned dictionary for each alpha.
fn approximation_report(
    x: &SignalMatrix,
    l: &LaplacianMatrix,
    taus: &heatgraph::dictionary::TauVector,
    alphas: &[f64],
) -> heatgraph::Result<Vec<ApproximationRow>> {
    let dict = build_dictionary(eig_sym(l.as_matrix())?, taus.clone());
    alphas
        .iter()
        .map(|&alpha| {
            let rec = ista(x.as_matrix(), &dict, &IstaConfig { alpha, ..Default::default() })?;
            let error = (x.as_matrix() - dict.apply_matrix(&rec.h)?).norm_squared();
            let nnz = rec.h.iter().filter(|v| **v != 0.0).count();
            Ok(ApproximationRow { alpha, nnz, error })
        })
        .collect()
}

fn write_approximation_csv(path: &Path, rows: &[ApproximationRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(heatgraph::Error::from)?;
    for r in rows {
        w.serialize(r).map_err(heatgraph::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn run_learn_cell(
    cfg: &ExperimentConfig,
    problem: &Problem,
    alpha: f64,
    beta: f64,
    dir: &Path,
) -> CliResult<CellResult> {
    let result_path = dir.join("result.json");
    if result_path.exists() {
        return Ok(read_json(&result_path)?);
    }
    std::fs::create_dir_all(dir)?;
    let solver = SolverConfig { alpha, beta, rng_seed: split_seed(problem.seed).2, ..cfg.solver.clone() };
    let every = cfg.checkpoint_every.unwrap_or(0);
    let ckpt_dir = dir.join("checkpoint");
    let out = learn_with_observer(&problem.signals, &solver, None, |state| {
        if every > 0 && state.iteration % every == 0 {
            checkpoint(&ckpt_dir, state)?;
        }
        Ok(())
    })?;
    write_dense_csv(dir.join("laplacian.csv"), out.laplacian.as_matrix())?;
    write_dense_csv(dir.join("codes.csv"), out.codes.as_matrix())?;
    write_json(dir.join("objective_history.json"), &out.objective_history)?;
    let report = problem
        .truth
        .as_ref()
        .map(|t| EdgeRecoveryReport::evaluate(&out.laplacian, t, solver.laplacian_threshold))
        .transpose()?;
    if cfg.graph_model == ModelKind::FromFile {
        let rows = approximation_report(&problem.signals, &out.laplacian, &out.taus, &cfg.approximation_alphas)?;
        write_approximation_csv(&dir.join("approximation.csv"), &rows)?;
    }
    let result = CellResult {
        alpha,
        beta,
        seed: problem.seed,
        iterations: out.iterations,
        converged: out.converged,
        taus: out.taus.as_slice().to_vec(),
        final_objective: *out.objective_history.last().expect("history is non-empty"),
        report,
    };
    // result.json last: its presence marks the cell complete
    write_json(&result_path, &result)?;
    Ok(result)
}

/// Pick the best `(alpha, beta)` by mean F-measure; the first cell wins ties.
pub fn select_best(cells: &[CellSummary]) -> Option<BestCell> {
    let mut best: Option<BestCell> = None;
    for (index, c) in cells.iter().enumerate() {
        let Some(report) = c.mean else { continue };
        if best.as_ref().is_none_or(|b| report.f_measure > b.f_measure) {
            best = Some(BestCell { alpha: c.alpha, beta: c.beta, index, f_measure: report.f_measure, report });
        }
    }
    best
}

/// Run every grid cell, skipping cells already on disk, and write `summary.json`.
pub fn learn(cfg: &ExperimentConfig) -> CliResult<LearnSummary> {
    let problems = load_problems(cfg)?;
    let root = &cfg.output_dir;
    std::fs::create_dir_all(root.join("cells"))?;
    write_manifest(root, "learn", cfg)?;
    if problems.iter().any(|p| p.truth.is_some()) {
        std::fs::create_dir_all(root.join("truth"))?;
        for p in &problems {
            if let Some(t) = &p.truth {
                write_dense_csv(root.join("truth").join(format!("seed-{}.csv", p.seed)), t.as_matrix())?;
            }
        }
    }

    let mut jobs = Vec::new();
    for &alpha in &cfg.alpha_grid {
        for &beta in &cfg.beta_grid {
            for (pi, p) in problems.iter().enumerate() {
                jobs.push((alpha, beta, pi, cell_dir_name(alpha, beta, p.seed)));
            }
        }
    }
    let results = jobs
        .par_iter()
        .map(|(alpha, beta, pi, name)| {
            run_learn_cell(cfg, &problems[*pi], *alpha, *beta, &root.join("cells").join(name))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let per_cell = problems.len();
    let cells: Vec<CellSummary> = results
        .chunks(per_cell)
        .zip(jobs.chunks(per_cell))
        .map(|(rs, js)| {
            let reports: Option<Vec<_>> = rs.iter().map(|r| r.report).collect();
            CellSummary {
                alpha: rs[0].alpha,
                beta: rs[0].beta,
                dirs: js.iter().map(|j| j.3.clone()).collect(),
                mean: reports.map(|r| mean_report(&r)),
            }
        })
        .collect();
    let summary = LearnSummary {
        version: VERSION.to_string(),
        seeds: cfg.seeds.clone(),
        best: select_best(&cells),
        cells,
    };
    write_json(root.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Sidecar of `localization.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizationSummary {
    pub alpha: f64,
    pub beta: f64,
    pub taus: Vec<f64>,
    pub mean_support_f_measure: Vec<f64>,
    pub mean_sources_recovered: Vec<f64>,
    pub trend_decreasing: bool,
}

/// Localization sweep over the graphs learned at the best cell of a previous `learn`.
pub fn localize(cfg: &ExperimentConfig) -> CliResult<SweepReport> {
    let root = &cfg.output_dir;
    let summary: LearnSummary = read_json(root.join("summary.json"))?;
    let best = summary
        .best
        .as_ref()
        .ok_or_else(|| CliError::Config("summary.json has no best cell (no ground truth?)".into()))?;
    let cell = &summary.cells[best.index];
    let pairs = summary
        .seeds
        .iter()
        .zip(&cell.dirs)
        .map(|(seed, dir)| {
            let truth = read_laplacian(&root.join("truth").join(format!("seed-{seed}.csv")))?;
            let learned = read_laplacian(&root.join("cells").join(dir).join("laplacian.csv"))?;
            Ok((truth, learned))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = localization_sweep_pairs(&pairs, &cfg.localization)?;
    let file = std::fs::File::create(root.join("localization.csv"))?;
    report.write_csv(file)?;
    let taus = report.taus();
    let means: Vec<(f64, f64)> = taus.iter().map(|&t| report.mean_at(t).expect("tau is in report")).collect();
    let side = LocalizationSummary {
        alpha: best.alpha,
        beta: best.beta,
        mean_support_f_measure: means.iter().map(|m| m.0).collect(),
        mean_sources_recovered: means.iter().map(|m| m.1).collect(),
        taus,
        trend_decreasing: report.trend_decreasing(),
    };
    write_json(root.join("localization_summary.json"), &side)?;
    Ok(report)
}

/// Score a learned Laplacian CSV against a ground-truth Laplacian CSV.
pub fn eval(learned: &Path, truth: &Path, threshold: f64, output: Option<&Path>) -> CliResult<EdgeRecoveryReport> {
    let report = EdgeRecoveryReport::evaluate(&read_laplacian(learned)?, &read_laplacian(truth)?, threshold)?;
    if let Some(path) = output {
        write_json(path, &report)?;
    }
    Ok(report)
}
