//! Graph recovery scores: edge precision, recall, F-measure, NMI of the
//! edge/non-edge partition of vertex pairs, and weight error.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{normalize_trace, weights_from_laplacian, LaplacianMatrix};

/// Unordered vertex pairs stored as `(i, j)` with `i < j`.
pub type EdgeSet = BTreeSet<(usize, usize)>;

/// Pairs `i < j` with `|l_ij| >= eps` and `l_ij != 0`.
pub fn edge_sets(l: &LaplacianMatrix, eps: f64) -> EdgeSet {
    l.edge_pairs(eps).into_iter().collect()
}

/// Precision, recall and their harmonic mean. Empty learned (resp. truth)
/// sets score a precision (resp. recall) of 0.
pub fn precision_recall_f(learned: &EdgeSet, truth: &EdgeSet) -> (f64, f64, f64) {
    let hits = learned.intersection(truth).count() as f64;
    let ratio = |den: usize| if den == 0 { 0.0 } else { hits / den as f64 };
    let precision = ratio(learned.len());
    let recall = ratio(truth.len());
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f)
}

fn entropy(counts: &[f64], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum()
}

/// NMI of two binary labelings from their 2x2 contingency table
/// `table[a][b]`, normalized by `sqrt(H(A) H(B))`.
pub fn nmi_from_contingency(table: [[f64; 2]; 2]) -> f64 {
    let total: f64 = table.iter().flatten().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let ha = entropy(&rows, total);
    let hb = entropy(&cols, total);
    if ha == 0.0 || hb == 0.0 {
        // a single-class side; identical only if both are single-class with the same label
        let same = (0..2).any(|k| rows[k] == total && cols[k] == total);
        return if same { 1.0 } else { 0.0 };
    }
    let mut mi = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let c = table[a][b];
            if c > 0.0 {
                mi += c / total * (c * total / (rows[a] * cols[b])).ln();
            }
        }
    }
    (mi / (ha * hb).sqrt()).clamp(0.0, 1.0)
}

/// NMI between the edge/non-edge labelings of all `n(n-1)/2` vertex pairs.
pub fn nmi_edge_partition(learned: &EdgeSet, truth: &EdgeSet, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("nmi needs at least 2 vertices, got {n}")));
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let both = learned.intersection(truth).count() as f64;
    let only_learned = learned.len() as f64 - both;
    let only_truth = truth.len() as f64 - both;
    let neither = pairs - both - only_learned - only_truth;
    Ok(nmi_from_contingency([[neither, only_truth], [only_learned, both]]))
}

fn normalized_or_zero(l: &LaplacianMatrix) -> Result<LaplacianMatrix> {
    if l.trace() > 0.0 {
        normalize_trace(l)
    } else {
        Ok(l.clone())
    }
}

/// Frobenius norm of the difference of the weight matrices of the two
/// trace-normalized Laplacians (graphs without edges are left as is).
pub fn l2_weight_error(learned: &LaplacianMatrix, truth: &LaplacianMatrix) -> Result<f64> {
    if learned.n() != truth.n() {
        return Err(Error::DimensionMismatch(format!(
            "learned graph has {} vertices, truth has {}",
            learned.n(),
            truth.n()
        )));
    }
    let a = weights_from_laplacian(&normalized_or_zero(learned)?);
    let b = weights_from_laplacian(&normalized_or_zero(truth)?);
    Ok((a.as_matrix() - b.as_matrix()).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecoveryReport {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub nmi: f64,
    pub l2_weight_error: f64,
}

impl EdgeRecoveryReport {
    /// Score `learned` against `truth`, reading edges at threshold `eps`.
    pub fn evaluate(learned: &LaplacianMatrix, truth: &LaplacianMatrix, eps: f64) -> Result<Self> {
        let l2 = l2_weight_error(learned, truth)?;
        let a = edge_sets(learned, eps);
        let b = edge_sets(truth, eps);
        let (precision, recall, f_measure) = precision_recall_f(&a, &b);
        Ok(Self {
            precision,
            recall,
            f_measure,
            nmi: nmi_edge_partition(&a, &b, learned.n())?,
            l2_weight_error: l2,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
