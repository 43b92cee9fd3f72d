//! Weighted undirected graphs, their combinatorial Laplacians, and the random
//! graph models used as synthetic ground truth.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

/// Entry tolerance used when validating symmetric matrices and row sums.
pub const VALIDATION_TOL: f64 = 1e-9;

/// Threshold below which learned edge weights are discarded.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 1e-4;

/// Number of draws a generator makes before giving up on connectivity.
pub const MAX_CONNECTIVITY_ATTEMPTS: usize = 100;

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn tol_for(m: &DMatrix<f64>) -> f64 {
    VALIDATION_TOL * m.amax().max(1.0)
}

/// Dense symmetric non-negative edge-weight matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "weight matrix is {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight matrix".into()));
        }
        let asymmetry = max_asymmetry(&w);
        if asymmetry > tol_for(&w) {
            return Err(Error::NotSymmetric { asymmetry });
        }
        if w.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("negative edge weight".into()));
        }
        if (0..w.nrows()).any(|i| w[(i, i)] != 0.0) {
            return Err(Error::InvalidInput("self-loop in weight matrix".into()));
        }
        Ok(Self(w))
    }

    /// Graph without edges on `n` vertices.
    pub fn empty(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    /// Build from an undirected edge list; repeated pairs overwrite.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, v) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!("edge ({i},{j}) out of range for n={n}")));
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop at vertex {i}")));
            }
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        Self::new(w)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Edges `(i, j, w)` with `i < j` and `w > 0`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.0[(i, j)];
                if v > 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.0.row_iter().map(|r| r.sum()).collect()
    }

    /// Breadth-first connectivity over positive-weight edges.
    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for (j, s) in seen.iter_mut().enumerate() {
                if !*s && self.0[(i, j)] > 0.0 {
                    *s = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == n
    }
}

/// Combinatorial graph Laplacian `L = D - W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix(DMatrix<f64>);

impl LaplacianMatrix {
    /// Validate symmetry, sign pattern and zero row sums.
    ///
    /// Positive semidefiniteness follows from the other three (the matrix is
    /// then weakly diagonally dominant with a non-negative diagonal).
    pub fn new(l: DMatrix<f64>) -> Result<Self> {
        if !l.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "laplacian is {}x{}",
                l.nrows(),
                l.ncols()
            )));
        }
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("laplacian".into()));
        }
        let tol = tol_for(&l);
        let asymmetry = max_asymmetry(&l);
        if asymmetry > tol {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let n = l.nrows();
        for i in 0..n {
            for j in 0..n {
                if i != j && l[(i, j)] > tol {
                    return Err(Error::InvalidLaplacian(format!(
                        "positive off-diagonal entry {} at ({i},{j})",
                        l[(i, j)]
                    )));
                }
            }
            let row_sum: f64 = l.row(i).sum();
            if row_sum.abs() > tol {
                return Err(Error::InvalidLaplacian(format!("row {i} sums to {row_sum:e}")));
            }
        }
        Ok(Self(l))
    }

    /// Wrap a matrix built by construction from non-negative weights.
    pub(crate) fn from_matrix_unchecked(l: DMatrix<f64>) -> Self {
        Self(l)
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Off-diagonal entries with `|L_ij| >= eps`, as unordered pairs `i < j`.
    pub fn edge_pairs(&self, eps: f64) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.0[(i, j)].abs() >= eps && self.0[(i, j)] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// `L = D - W`.
pub fn laplacian_from_weights(w: &WeightMatrix) -> LaplacianMatrix {
    let n = w.n();
    let mut l = -w.as_matrix().clone();
    for i in 0..n {
        l[(i, i)] = w.as_matrix().row(i).sum();
    }
    LaplacianMatrix::from_matrix_unchecked(l)
}

/// `W = -L` with the diagonal set to zero.
pub fn weights_from_laplacian(l: &LaplacianMatrix) -> WeightMatrix {
    let n = l.n();
    let mut w = -l.as_matrix().clone();
    for i in 0..n {
        w[(i, i)] = 0.0;
    }
    // -0.0 from negating exact zeros is harmless but keep entries canonical.
    w.apply(|v| {
        if *v == 0.0 {
            *v = 0.0
        }
    });
    WeightMatrix(w)
}

/// Scale `l` so that its trace equals the number of vertices.
pub fn normalize_trace(l: &LaplacianMatrix) -> Result<LaplacianMatrix> {
    let tr = l.trace();
    if !(tr > 0.0) {
        return Err(Error::DegenerateGraph(format!(
            "cannot normalize a laplacian with trace {tr}"
        )));
    }
    let scale = l.n() as f64 / tr;
    Ok(LaplacianMatrix::from_matrix_unchecked(l.as_matrix() * scale))
}

/// Zero every off-diagonal entry with magnitude below `eps`, then rebuild the
/// diagonal from the remaining weights.
pub fn threshold_laplacian(l: &LaplacianMatrix, eps: f64) -> LaplacianMatrix {
    let n = l.n();
    let mut out = l.as_matrix().clone();
    for i in 0..n {
        for j in 0..n {
            if i != j && out[(i, j)].abs() < eps {
                out[(i, j)] = 0.0;
            }
        }
    }
    for i in 0..n {
        out[(i, i)] = 0.0;
        let off: f64 = out.row(i).sum();
        out[(i, i)] = -off;
    }
    LaplacianMatrix::from_matrix_unchecked(out)
}

/// Random graph models available for synthetic experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GraphModel {
    /// Thresholded Gaussian kernel on points uniform in the unit square.
    Rbf { sigma: f64, kappa: f64 },
    /// Erdős–Rényi with edge probability `p`.
    Er { p: f64 },
    /// Barabási–Albert preferential attachment.
    Ba { m_attach: usize },
}

impl GraphModel {
    pub const RBF_DEFAULT: GraphModel = GraphModel::Rbf { sigma: 0.5, kappa: 0.75 };
    pub const ER_DEFAULT: GraphModel = GraphModel::Er { p: 0.2 };
    pub const BA_DEFAULT: GraphModel = GraphModel::Ba { m_attach: 1 };

    /// Draw a connected graph on `n` vertices.
    pub fn generate(&self, n: usize, seed: u64) -> Result<WeightMatrix> {
        match *self {
            GraphModel::Rbf { sigma, kappa } => generate_rbf_graph(n, sigma, kappa, seed),
            GraphModel::Er { p } => generate_er_graph(n, p, seed),
            GraphModel::Ba { m_attach } => generate_ba_graph(n, m_attach, seed),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GraphModel::Rbf { .. } => "rbf",
            GraphModel::Er { .. } => "er",
            GraphModel::Ba { .. } => "ba",
        }
    }
}

fn draw_connected(
    seed: u64,
    mut draw: impl FnMut(&mut Rng) -> WeightMatrix,
) -> Result<WeightMatrix> {
    let mut rng = rng_from_seed(seed);
    for _ in 0..MAX_CONNECTIVITY_ATTEMPTS {
        let w = draw(&mut rng);
        if w.is_connected() {
            return Ok(w);
        }
    }
    Err(Error::Disconnected { attempts: MAX_CONNECTIVITY_ATTEMPTS })
}

/// Thresholded Gaussian kernel weights for the given vertex coordinates.
pub fn rbf_weights(coords: &[[f64; 2]], sigma: f64, kappa: f64) -> WeightMatrix {
    let n = coords.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let d2 = dx * dx + dy * dy;
            if d2.sqrt() <= kappa {
                let v = (-d2 / (2.0 * sigma * sigma)).exp();
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    WeightMatrix(w)
}

/// One RBF draw without the connectivity requirement; also returns the
/// sampled coordinates.
pub fn sample_rbf_graph(
    n: usize,
    sigma: f64,
    kappa: f64,
    rng: &mut Rng,
) -> (WeightMatrix, Vec<[f64; 2]>) {
    let coords: Vec<[f64; 2]> =
        (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    (rbf_weights(&coords, sigma, kappa), coords)
}

/// Connected RBF graph together with its vertex coordinates.
pub fn generate_rbf_graph_with_coords(
    n: usize,
    sigma: f64,
    kappa: f64,
    seed: u64,
) -> Result<(WeightMatrix, Vec<[f64; 2]>)> {
    if !(sigma > 0.0) || !(kappa > 0.0) {
        return Err(Error::InvalidInput(format!(
            "rbf requires sigma > 0 and kappa > 0 (got {sigma}, {kappa})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..MAX_CONNECTIVITY_ATTEMPTS {
        let (w, coords) = sample_rbf_graph(n, sigma, kappa, &mut rng);
        if w.is_connected() {
            return Ok((w, coords));
        }
    }
    Err(Error::Disconnected { attempts: MAX_CONNECTIVITY_ATTEMPTS })
}

pub fn generate_rbf_graph(n: usize, sigma: f64, kappa: f64, seed: u64) -> Result<WeightMatrix> {
    generate_rbf_graph_with_coords(n, sigma, kappa, seed).map(|(w, _)| w)
}

/// One Erdős–Rényi draw with unit weights, connected or not.
pub fn sample_er_graph(n: usize, p: f64, rng: &mut Rng) -> WeightMatrix {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                w[(i, j)] = 1.0;
                w[(j, i)] = 1.0;
            }
        }
    }
    WeightMatrix(w)
}

pub fn generate_er_graph(n: usize, p: f64, seed: u64) -> Result<WeightMatrix> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("edge probability must be in (0,1), got {p}")));
    }
    draw_connected(seed, |rng| sample_er_graph(n, p, rng))
}

/// Barabási–Albert growth from a complete seed graph on `m_attach` vertices.
///
/// Each new vertex attaches to `m_attach` distinct existing vertices chosen
/// with probability proportional to their current degree (uniformly while
/// every degree is still zero).
pub fn sample_ba_graph(n: usize, m_attach: usize, rng: &mut Rng) -> WeightMatrix {
    let mut w = DMatrix::zeros(n, n);
    let mut degree = vec![0.0f64; n];
    for i in 0..m_attach {
        for j in (i + 1)..m_attach {
            w[(i, j)] = 1.0;
            w[(j, i)] = 1.0;
            degree[i] += 1.0;
            degree[j] += 1.0;
        }
    }
    for v in m_attach..n {
        let mut candidates: Vec<usize> = (0..v).collect();
        let mut targets = Vec::with_capacity(m_attach);
        for _ in 0..m_attach {
            let total: f64 = candidates.iter().map(|&c| degree[c]).sum();
            let pick = if total > 0.0 {
                let mut r = rng.random::<f64>() * total;
                let mut idx = candidates.len() - 1;
                for (k, &c) in candidates.iter().enumerate() {
                    if r < degree[c] {
                        idx = k;
                        break;
                    }
                    r -= degree[c];
                }
                idx
            } else {
                rng.random_range(0..candidates.len())
            };
            targets.push(candidates.swap_remove(pick));
        }
        for t in targets {
            w[(v, t)] = 1.0;
            w[(t, v)] = 1.0;
            degree[v] += 1.0;
            degree[t] += 1.0;
        }
    }
    WeightMatrix(w)
}

pub fn generate_ba_graph(n: usize, m_attach: usize, seed: u64) -> Result<WeightMatrix> {
    if m_attach < 1 || m_attach >= n {
        return Err(Error::InvalidInput(format!(
            "barabasi-albert requires 1 <= m_attach < n (got m_attach={m_attach}, n={n})"
        )));
    }
    draw_connected(seed, |rng| sample_ba_graph(n, m_attach, rng))
}

/// Random trace-normalized Laplacian used to initialize the solver:
/// Erdős–Rényi(0.5) support with uniform(0,1) weights.
pub fn random_valid_laplacian(n: usize, seed: u64) -> Result<LaplacianMatrix> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 vertices, got {n}")));
    }
    let uniform = Uniform::new(0.0f64, 1.0).expect("valid range");
    let w = draw_connected(seed, |rng| {
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.5 {
                    // open interval keeps every sampled edge strictly positive
                    let v = loop {
                        let v = uniform.sample(rng);
                        if v > 0.0 {
                            break v;
                        }
                    };
                    w[(i, j)] = v;
                    w[(j, i)] = v;
                }
            }
        }
        WeightMatrix(w)
    })?;
    normalize_trace(&laplacian_from_weights(&w))
}
