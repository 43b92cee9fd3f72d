//! Source localization: recover the initial heat sources of diffused signals
//! by l1-regularized least squares on a heat dictionary.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dictionary::{build_dictionary, generate_synthetic_signals, HeatDictionary, TauVector};
use crate::error::{Error, Result};
use crate::graphs::LaplacianMatrix;
use crate::metrics::precision_recall_f;
use crate::rng::{derive_seed, rng_from_seed};
use crate::solver::soft_threshold;
use crate::spectral::eig_sym;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IstaConfig {
    pub alpha: f64,
    pub max_iter: usize,
    /// Fixed step; defaults to `1 / ||2 D^T D||_2`.
    pub step: Option<f64>,
    /// Stop once `||h_new - h|| < tol max(1, ||h_new||)`.
    pub tol: f64,
}

impl Default for IstaConfig {
    fn default() -> Self {
        Self { alpha: 1e-2, max_iter: 2000, step: None, tol: 1e-8 }
    }
}

/// Largest eigenvalue of `2 D^T D` by power iteration.
pub fn gram_spectral_norm_x2(dict: &HeatDictionary) -> f64 {
    let atoms = dict.n() * dict.scales();
    let mut rng = rng_from_seed(0x15ea);
    let mut v = DMatrix::from_fn(atoms, 1, |_, _| StandardNormal.sample(&mut rng));
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..10_000 {
        let dv = dict.apply_matrix(&v).expect("matching dimensions");
        let mut w = dict.adjoint_apply(&dv).expect("matching dimensions") * 2.0;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        w /= norm;
        v = w;
        if (next - estimate).abs() <= 1e-13 * next.abs() {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Output of [`ista`].
#[derive(Debug, Clone)]
pub struct IstaResult {
    pub h: DMatrix<f64>,
    pub iterations: usize,
    /// `||X - D H||_F^2 + alpha ||H||_1` at the start and after every iteration.
    pub objective_history: Vec<f64>,
}

/// ISTA on every column of `x` simultaneously (the problem separates by column).
pub fn ista(x: &DMatrix<f64>, dict: &HeatDictionary, cfg: &IstaConfig) -> Result<IstaResult> {
    if x.nrows() != dict.n() {
        return Err(Error::DimensionMismatch(format!(
            "signals have {} rows, dictionary has {} vertices",
            x.nrows(),
            dict.n()
        )));
    }
    let step = match cfg.step {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::InvalidInput(format!("ista step must be > 0, got {s}"))),
        None => {
            let lip = gram_spectral_norm_x2(dict);
            if lip > 0.0 {
                1.0 / lip
            } else {
                1.0
            }
        }
    };
    let objective = |r: &DMatrix<f64>, h: &DMatrix<f64>| {
        r.norm_squared() + cfg.alpha * h.iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut h = DMatrix::zeros(dict.n() * dict.scales(), x.ncols());
    let mut r = dict.apply_matrix(&h)? - x;
    let mut history = vec![objective(&r, &h)];
    let threshold = step * cfg.alpha;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let g = dict.adjoint_apply(&r)? * 2.0;
        let next = (&h - g * step).map(|v| soft_threshold(v, threshold));
        let change = (&next - &h).norm();
        h = next;
        r = dict.apply_matrix(&h)? - x;
        history.push(objective(&r, &h));
        if change < cfg.tol * h.norm().max(1.0) {
            break;
        }
    }
    Ok(IstaResult { h, iterations, objective_history: history })
}

/// Sparse code of a single signal.
pub fn ista_recover(x: &DVector<f64>, dict: &HeatDictionary, cfg: &IstaConfig) -> Result<DVector<f64>> {
    let out = ista(&DMatrix::from_column_slice(x.len(), 1, x.as_slice()), dict, cfg)?;
    Ok(out.h.column(0).into_owned())
}

/// Indices of the `s` largest-magnitude code entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceEstimate {
    /// Sorted ascending.
    pub indices: Vec<usize>,
    /// Fewer than `s` entries were non-zero, so part of the selection is arbitrary.
    pub degenerate: bool,
}

/// Top-`s` entries of `h` by magnitude, ties going to the lowest index.
pub fn top_sources(h: &[f64], s: usize) -> SourceEstimate {
    let mut order: Vec<usize> = (0..h.len()).collect();
    order.sort_by(|&a, &b| h[b].abs().total_cmp(&h[a].abs()).then(a.cmp(&b)));
    let mut indices: Vec<usize> = order.into_iter().take(s).collect();
    indices.sort_unstable();
    let nonzero = h.iter().filter(|v| **v != 0.0).count();
    SourceEstimate { indices, degenerate: nonzero < s }
}

/// Recover the `s_true` strongest sources of one signal.
pub fn recover_sources(
    x: &DVector<f64>,
    dict: &HeatDictionary,
    s_true: usize,
    cfg: &IstaConfig,
) -> Result<SourceEstimate> {
    if s_true == 0 {
        return Err(Error::InvalidInput("at least one source is required".into()));
    }
    let h = ista_recover(x, dict, cfg)?;
    Ok(top_sources(h.as_slice(), s_true))
}

fn support(column: &[f64]) -> BTreeSet<(usize, usize)> {
    column
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| (i, 0))
        .collect()
}

/// Scores of one ISTA run against the true codes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryScore {
    /// Mean over signals of the F-measure between recovered and true supports.
    pub support_f_measure: f64,
    /// Mean over signals of the number of true sources among the top-`s` entries.
    pub mean_sources_recovered: f64,
}

/// Score recovered codes against true ones, column by column.
pub fn score_recovery(recovered: &DMatrix<f64>, truth: &DMatrix<f64>, s: usize) -> RecoveryScore {
    let m = truth.ncols();
    let mut f_total = 0.0;
    let mut hits_total = 0usize;
    for j in 0..m {
        let rec = recovered.column(j);
        let tru = truth.column(j);
        let (_, _, f) = precision_recall_f(&support(rec.as_slice()), &support(tru.as_slice()));
        f_total += f;
        let est = top_sources(rec.as_slice(), s);
        hits_total += est.indices.iter().filter(|&&i| tru[i] != 0.0).count();
    }
    RecoveryScore {
        support_f_measure: f_total / m as f64,
        mean_sources_recovered: hits_total as f64 / m as f64,
    }
}

/// `10^{-1}, 10^{-0.5}, ..., 10^{1.5}`.
pub fn default_tau_grid() -> Vec<f64> {
    (0..6).map(|k| 10f64.powf(-1.0 + 0.5 * k as f64)).collect()
}

/// `10^{0}, 10^{-0.5}, ..., 10^{-3}`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..7).map(|k| 10f64.powf(-0.5 * k as f64)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub taus: Vec<f64>,
    pub n_test: usize,
    pub s_sources: usize,
    pub alphas: Vec<f64>,
    pub ista_max_iter: usize,
    pub ista_tol: f64,
    pub rng_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            taus: default_tau_grid(),
            n_test: 1000,
            s_sources: 3,
            alphas: default_alpha_grid(),
            ista_max_iter: 2000,
            ista_tol: 1e-8,
            rng_seed: 0,
        }
    }
}

/// One `(tau, instance)` cell, scored at the alpha with the best support F-measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub instance: usize,
    pub support_f_measure: f64,
    pub mean_sources_recovered: f64,
    pub best_alpha: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Mean of `(support_f_measure, mean_sources_recovered)` over instances at `tau`.
    pub fn mean_at(&self, tau: f64) -> Option<(f64, f64)> {
        let rows: Vec<&SweepRow> = self.rows.iter().filter(|r| r.tau == tau).collect();
        if rows.is_empty() {
            return None;
        }
        let k = rows.len() as f64;
        Some((
            rows.iter().map(|r| r.support_f_measure).sum::<f64>() / k,
            rows.iter().map(|r| r.mean_sources_recovered).sum::<f64>() / k,
        ))
    }

    /// Distinct scales in row order.
    pub fn taus(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.tau) {
                out.push(r.tau);
            }
        }
        out
    }

    /// Whether the mean support F-measure at the first scale exceeds the one at the last.
    pub fn trend_decreasing(&self) -> bool {
        let taus = self.taus();
        match (taus.first().and_then(|&t| self.mean_at(t)), taus.last().and_then(|&t| self.mean_at(t))) {
            (Some(a), Some(b)) => a.0 > b.0,
            _ => false,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Score one `(tau, instance)` cell: signals generated on `truth`, recovered on `learned`.
pub fn sweep_cell(
    truth: &LaplacianMatrix,
    learned: &LaplacianMatrix,
    tau: f64,
    instance: usize,
    cfg: &SweepConfig,
    seed: u64,
) -> Result<SweepRow> {
    if truth.n() != learned.n() {
        return Err(Error::DimensionMismatch(format!(
            "true graph has {} vertices, learned graph has {}",
            truth.n(),
            learned.n()
        )));
    }
    let taus = TauVector::new(vec![tau])?;
    let true_dict = build_dictionary(eig_sym(truth.as_matrix())?, taus.clone());
    let learned_dict = build_dictionary(eig_sym(learned.as_matrix())?, taus);
    let (x, codes) = generate_synthetic_signals(&true_dict, cfg.n_test, cfg.s_sources, 0.0, seed)?;
    let step = 1.0 / gram_spectral_norm_x2(&learned_dict).max(f64::MIN_POSITIVE);
    let mut best: Option<SweepRow> = None;
    for &alpha in &cfg.alphas {
        let ista_cfg = IstaConfig { alpha, max_iter: cfg.ista_max_iter, step: Some(step), tol: cfg.ista_tol };
        let rec = ista(x.as_matrix(), &learned_dict, &ista_cfg)?;
        let score = score_recovery(&rec.h, codes.as_matrix(), cfg.s_sources);
        let row = SweepRow {
            tau,
            instance,
            support_f_measure: score.support_f_measure,
            mean_sources_recovered: score.mean_sources_recovered,
            best_alpha: alpha,
        };
        let better = match &best {
            None => true,
            Some(b) => (row.support_f_measure, row.mean_sources_recovered)
                > (b.support_f_measure, b.mean_sources_recovered),
        };
        if better {
            best = Some(row);
        }
    }
    best.ok_or_else(|| Error::InvalidInput("alpha grid is empty".into()))
}

/// Sweep over scales for `(truth, learned)` graph pairs; rows are ordered by
/// scale, then instance.
pub fn localization_sweep_pairs(
    pairs: &[(LaplacianMatrix, LaplacianMatrix)],
    cfg: &SweepConfig,
) -> Result<SweepReport> {
    if cfg.s_sources == 0 || cfg.n_test == 0 {
        return Err(Error::InvalidInput("n_test and s_sources must be positive".into()));
    }
    let mut rows = Vec::with_capacity(cfg.taus.len() * pairs.len());
    for (ti, &tau) in cfg.taus.iter().enumerate() {
        for (inst, (truth, learned)) in pairs.iter().enumerate() {
            let seed = derive_seed(derive_seed(cfg.rng_seed, inst as u64), ti as u64);
            rows.push(sweep_cell(truth, learned, tau, inst, cfg, seed)?);
        }
    }
    Ok(SweepReport { rows })
}

/// Sweep over scales for several graphs learned from signals on one true graph.
pub fn localization_sweep(
    truth: &LaplacianMatrix,
    learned: &[LaplacianMatrix],
    cfg: &SweepConfig,
) -> Result<SweepReport> {
    let pairs: Vec<_> = learned.iter().map(|l| (truth.clone(), l.clone())).collect();
    localization_sweep_pairs(&pairs, cfg)
}
