//! Proximal Laplacian update.
//!
//! The feasible set `{tr L = N, L_ij = L_ji <= 0, L 1 = 0}` is parameterized
//! by the upper-triangular edge weights `w_ij = -L_ij`. Under this map it
//! becomes the scaled simplex `{w >= 0, sum w = N/2}`, and the proximal
//! objective
//!
//! ```text
//! <L - Lt, G> + d/2 ||L - Lt||_F^2 + beta ||L||_F^2
//! ```
//!
//! becomes `<c, w> + (d + 2 beta)/2 ||L(w)||_F^2` up to a constant, with
//! `c_ij = C_ii + C_jj - 2 C_ij` for `C = G - d Lt` and
//! `||L(w)||_F^2 = sum_i deg_i^2 + 2 sum_{i<j} w_ij^2`.
//! The Hessian of `||L(w)||_F^2 / 2` is `2I + B^T B` (`B` the unsigned
//! vertex-edge incidence of the complete graph), whose spectrum lies in
//! `[2, 2N]`, so accelerated projected gradient converges linearly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graphs::LaplacianMatrix;

/// Upper-triangular off-diagonal weights `w_ij = -L_ij`, `i < j`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    n: usize,
    w: DVector<f64>,
}

impl WeightVector {
    pub fn new(n: usize, w: DVector<f64>) -> Result<Self> {
        if w.len() != pair_count(n) {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {n} vertices (expected {})",
                w.len(),
                pair_count(n)
            )));
        }
        if w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidInput("edge weights must be non-negative".into()));
        }
        Ok(Self { n, w })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn sum(&self) -> f64 {
        self.w.sum()
    }

    /// Membership in the scaled simplex `sum w = n/2`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.sum() - self.n as f64 / 2.0).abs() <= tol
    }
}

/// `n (n - 1) / 2`.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
}

pub fn laplacian_to_weights(l: &LaplacianMatrix) -> WeightVector {
    let n = l.n();
    let m = l.as_matrix();
    let w = DVector::from_iterator(pair_count(n), pairs(n).map(|(i, j)| (-m[(i, j)]).max(0.0)));
    WeightVector { n, w }
}

pub fn weights_to_laplacian(w: &WeightVector) -> LaplacianMatrix {
    LaplacianMatrix::from_matrix_unchecked(laplacian_matrix(w.n, &w.w))
}

fn laplacian_matrix(n: usize, w: &DVector<f64>) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for (k, (i, j)) in pairs(n).enumerate() {
        let v = w[k];
        l[(i, j)] = -v;
        l[(j, i)] = -v;
        l[(i, i)] += v;
        l[(j, j)] += v;
    }
    l
}

/// Euclidean projection onto `{w >= 0, sum w = total}` by sorting.
pub fn project_scaled_simplex(v: &DVector<f64>, total: f64) -> DVector<f64> {
    assert!(total > 0.0, "simplex total must be positive");
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - total) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Solver controls.
#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    /// Bound on the projected-gradient fixed-point residual, relative to
    /// `max(1, ||w||)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 5000 }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub laplacian: LaplacianMatrix,
    pub iterations: usize,
    pub residual: f64,
}

/// The proximal Laplacian sub-problem in weight space.
#[derive(Debug, Clone)]
pub struct LaplacianQp {
    n: usize,
    linear: DVector<f64>,
    curvature: f64,
    center: LaplacianMatrix,
    grad: DMatrix<f64>,
    d_t: f64,
    beta: f64,
}

impl LaplacianQp {
    pub fn new(grad_l: &DMatrix<f64>, l_prev: &LaplacianMatrix, d_t: f64, beta: f64) -> Result<Self> {
        let n = l_prev.n();
        if grad_l.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "gradient is {:?}, laplacian is {n}x{n}",
                grad_l.shape()
            )));
        }
        if !(d_t > 0.0) || !(beta >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "need d_t > 0 and beta >= 0 (got {d_t}, {beta})"
            )));
        }
        let c = grad_l - l_prev.as_matrix() * d_t;
        let linear = DVector::from_iterator(
            pair_count(n),
            pairs(n).map(|(i, j)| c[(i, i)] + c[(j, j)] - c[(i, j)] - c[(j, i)]),
        );
        Ok(Self {
            n,
            linear,
            curvature: d_t + 2.0 * beta,
            center: l_prev.clone(),
            grad: grad_l.clone(),
            d_t,
            beta,
        })
    }

    /// Weight total of the feasible set.
    pub fn total(&self) -> f64 {
        self.n as f64 / 2.0
    }

    /// Exact Lipschitz constant of the weight-space gradient.
    pub fn lipschitz(&self) -> f64 {
        self.curvature * 2.0 * self.n as f64
    }

    /// Strong convexity modulus of the weight-space objective.
    pub fn strong_convexity(&self) -> f64 {
        self.curvature * 2.0
    }

    fn degrees(&self, w: &DVector<f64>) -> Vec<f64> {
        let mut deg = vec![0.0; self.n];
        for (k, (i, j)) in pairs(self.n).enumerate() {
            deg[i] += w[k];
            deg[j] += w[k];
        }
        deg
    }

    /// Weight-space objective (differs from [`Self::objective`] by a constant).
    pub fn reduced_objective(&self, w: &DVector<f64>) -> f64 {
        let deg = self.degrees(w);
        let sq: f64 = deg.iter().map(|d| d * d).sum::<f64>() + 2.0 * w.norm_squared();
        self.linear.dot(w) + 0.5 * self.curvature * sq
    }

    pub fn reduced_gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let deg = self.degrees(w);
        DVector::from_iterator(
            w.len(),
            pairs(self.n)
                .enumerate()
                .map(|(k, (i, j))| self.linear[k] + self.curvature * (deg[i] + deg[j] + 2.0 * w[k])),
        )
    }

    /// The proximal objective evaluated on a matrix.
    pub fn objective(&self, l: &DMatrix<f64>) -> f64 {
        let diff = l - self.center.as_matrix();
        diff.dot(&self.grad) + 0.5 * self.d_t * diff.norm_squared() + self.beta * l.norm_squared()
    }

    fn residual(&self, w: &DVector<f64>, step: f64) -> f64 {
        let g = self.reduced_gradient(w);
        let moved = project_scaled_simplex(&(w - g * step), self.total());
        (w - moved).norm()
    }

    /// Accelerated projected gradient with objective-based momentum restart.
    pub fn solve(&self, opts: &QpOptions) -> Result<QpSolution> {
        let total = self.total();
        let step = 1.0 / self.lipschitz();
        let q = self.strong_convexity() / self.lipschitz();
        let momentum = (1.0 - q.sqrt()) / (1.0 + q.sqrt());

        let reference = project_scaled_simplex(&laplacian_to_weights(&self.center).w, total);
        let mut w = reference.clone();
        let mut w_prev = w.clone();
        let mut f_w = self.reduced_objective(&w);
        let mut residual = self.residual(&w, step);
        let mut iterations = 0;
        while residual > opts.tol * w.norm().max(1.0) {
            if iterations >= opts.max_iter {
                return Err(Error::QpNotConverged { iterations, residual });
            }
            iterations += 1;
            let y = &w + (&w - &w_prev) * momentum;
            let g = self.reduced_gradient(&y);
            let mut next = project_scaled_simplex(&(&y - g * step), total);
            let mut f_next = self.reduced_objective(&next);
            if f_next > f_w {
                // restart from a plain projected gradient step
                let g = self.reduced_gradient(&w);
                next = project_scaled_simplex(&(&w - g * step), total);
                f_next = self.reduced_objective(&next);
                w_prev = next.clone();
            } else {
                w_prev = w;
            }
            w = next;
            f_w = f_next;
            residual = self.residual(&w, step);
        }
        if self.reduced_objective(&reference) < f_w {
            w = reference;
        }
        Ok(QpSolution {
            laplacian: LaplacianMatrix::from_matrix_unchecked(laplacian_matrix(self.n, &w)),
            iterations,
            residual,
        })
    }
}

/// Minimize `<L - l_prev, grad_l> + d_t/2 ||L - l_prev||_F^2 + beta ||L||_F^2`
/// over valid Laplacians with trace `N`.
pub fn solve_laplacian_qp(
    grad_l: &DMatrix<f64>,
    l_prev: &LaplacianMatrix,
    d_t: f64,
    beta: f64,
    opts: &QpOptions,
) -> Result<QpSolution> {
    LaplacianQp::new(grad_l, l_prev, d_t, beta)?.solve(opts)
}
