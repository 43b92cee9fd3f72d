//! Independent oracles shared by the integration tests. Nothing here goes
//! through the crate's eigendecomposition-based kernels.

#![allow(dead_code)]

use heatgraph::dictionary::{SignalMatrix, SparseCodes};
use heatgraph::graphs::{random_valid_laplacian, LaplacianMatrix};
use heatgraph::rng::rng_from_seed;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    (&a + a.transpose()) * 0.5
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

pub fn random_laplacian(n: usize, seed: u64) -> LaplacianMatrix {
    random_valid_laplacian(n, seed).unwrap()
}

/// Truncated Taylor series `sum_{k <= terms} m^k / k!`.
pub fn taylor_exp(m: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=terms {
        term = &term * m / k as f64;
        sum += &term;
    }
    sum
}

/// `exp(m)` by scaling and squaring around a 30-term Taylor series; valid
/// for any square matrix.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = m.abs().row_sum().amax();
    let mut k = 0;
    while norm / 2f64.powi(k) > 0.25 {
        k += 1;
    }
    let mut e = taylor_exp(&(m / 2f64.powi(k)), 30);
    for _ in 0..k {
        e = &e * &e;
    }
    e
}

/// `||X - sum_s exp(-tau_s L) H_s||_F^2` with dense exponentials.
pub fn dense_data_fit(x: &DMatrix<f64>, l: &DMatrix<f64>, taus: &[f64], h: &DMatrix<f64>) -> f64 {
    let n = l.nrows();
    let mut r = x.clone();
    for (s, &t) in taus.iter().enumerate() {
        r -= expm(&(l * -t)) * h.rows(s * n, n);
    }
    r.norm_squared()
}

/// Random data-fit instance: signals, codes and a valid Laplacian.
pub struct FitInstance {
    pub x: SignalMatrix,
    pub h: SparseCodes,
    pub l: LaplacianMatrix,
    pub taus: Vec<f64>,
}

pub fn fit_instance(n: usize, s: usize, m: usize, seed: u64) -> FitInstance {
    let mut rng = rng_from_seed(seed ^ 0xfeed);
    let taus: Vec<f64> = (0..s).map(|_| 0.2 + 3.0 * rng.random::<f64>()).collect();
    FitInstance {
        x: SignalMatrix::new(random_matrix(n, m, seed ^ 0xa)).unwrap(),
        h: SparseCodes::new(random_matrix(n * s, m, seed ^ 0xb), s).unwrap(),
        l: random_laplacian(n, seed),
        taus,
    }
}

/// Central-difference gradient of `f` over the symmetric matrices: entry
/// `(i, j)` is half the derivative along `e_i e_j^T + e_j e_i^T`.
pub fn fd_symmetric_gradient(l: &DMatrix<f64>, h: f64, f: impl Fn(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let n = l.nrows();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut dir = DMatrix::zeros(n, n);
            dir[(i, j)] = 1.0;
            dir[(j, i)] = 1.0;
            let d = (f(&(l + &dir * h)) - f(&(l - &dir * h))) / (2.0 * h);
            if i == j {
                g[(i, i)] = d;
            } else {
                g[(i, j)] = d / 2.0;
                g[(j, i)] = d / 2.0;
            }
        }
    }
    g
}

/// Explicit `S x S` Hessian in `tau` of the data fit:
///
/// diagonal `-2 tr(H_s X^T L^2 e^{-tau_s L}) + 4 tr(H_s H_s^T L^2 e^{-2 tau_s L})
///           + 2 sum_{s' != s} tr(H_s' H_s^T L^2 e^{-(tau_s + tau_s') L})`,
/// off-diagonal `2 tr(H_s' H_s^T L^2 e^{-(tau_s + tau_s') L})`.
pub fn tau_hessian(x: &DMatrix<f64>, l: &DMatrix<f64>, taus: &[f64], h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let s_count = taus.len();
    let l2 = l * l;
    let block = |s: usize| h.rows(s * n, n).into_owned();
    let mut out = DMatrix::zeros(s_count, s_count);
    for s in 0..s_count {
        for t in 0..s_count {
            let cross = 2.0 * (block(t) * block(s).transpose() * &l2 * expm(&(l * -(taus[s] + taus[t])))).trace();
            if s == t {
                let own = -2.0 * (block(s) * x.transpose() * &l2 * expm(&(l * -taus[s]))).trace();
                out[(s, s)] += own + 2.0 * cross;
            } else {
                out[(s, t)] = cross;
                out[(s, s)] += cross;
            }
        }
    }
    out
}

/// Vertex pairs `i < j` in row-major order.
pub fn pair_list(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
}

pub fn laplacian_of_weights(n: usize, w: &[f64]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for (k, &(i, j)) in pair_list(n).iter().enumerate() {
        l[(i, j)] -= w[k];
        l[(j, i)] -= w[k];
        l[(i, i)] += w[k];
        l[(j, j)] += w[k];
    }
    l
}

/// `<G, L - Lt> + d/2 ||L - Lt||^2 + beta ||L||^2`.
pub fn qp_objective(g: &DMatrix<f64>, lt: &DMatrix<f64>, d: f64, beta: f64, l: &DMatrix<f64>) -> f64 {
    let diff = l - lt;
    g.dot(&diff) + 0.5 * d * diff.norm_squared() + beta * l.norm_squared()
}

/// Minimize the proximal Laplacian QP by enumerating every candidate support
/// of the edge weights and solving the equality-constrained KKT system on it.
/// Exponential in the number of pairs; meant for `n <= 5`.
pub fn qp_active_set_oracle(g: &DMatrix<f64>, lt: &DMatrix<f64>, d: f64, beta: f64) -> (f64, DMatrix<f64>) {
    let n = lt.nrows();
    let pairs = pair_list(n);
    let e = pairs.len();
    let basis: Vec<DMatrix<f64>> = (0..e)
        .map(|k| {
            let mut w = vec![0.0; e];
            w[k] = 1.0;
            laplacian_of_weights(n, &w)
        })
        .collect();
    let q = DMatrix::from_fn(e, e, |a, b| (d + 2.0 * beta) * basis[a].dot(&basis[b]));
    let shifted = g - lt * d;
    let b = DVector::from_fn(e, |k, _| shifted.dot(&basis[k]));
    let total = n as f64 / 2.0;
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for mask in 1u32..(1 << e) {
        let free: Vec<usize> = (0..e).filter(|k| mask & (1 << k) != 0).collect();
        let f = free.len();
        let mut kkt = DMatrix::zeros(f + 1, f + 1);
        let mut rhs = DVector::zeros(f + 1);
        for (a, &ka) in free.iter().enumerate() {
            for (c, &kc) in free.iter().enumerate() {
                kkt[(a, c)] = q[(ka, kc)];
            }
            kkt[(a, f)] = 1.0;
            kkt[(f, a)] = 1.0;
            rhs[a] = -b[ka];
        }
        rhs[f] = total;
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if (0..f).any(|a| sol[a] < -1e-12) {
            continue;
        }
        let mut w = vec![0.0; e];
        for (a, &k) in free.iter().enumerate() {
            w[k] = sol[a].max(0.0);
        }
        let l = laplacian_of_weights(n, &w);
        let value = qp_objective(g, lt, d, beta, &l);
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, l));
        }
    }
    best.expect("the simplex is non-empty")
}

/// `|f(L + h D) - f(L) - h <G, D>| / (h^2 ||D||^2)` for `f(L) = tr(A exp(nu L))`
/// at `h = 1e-2, ..., 1e-5`, with the exponential from the Taylor oracle.
pub fn first_order_residual_ratios(
    a: &DMatrix<f64>,
    l: &DMatrix<f64>,
    dir: &DMatrix<f64>,
    nu: f64,
    grad: &DMatrix<f64>,
) -> Vec<f64> {
    let f = |m: &DMatrix<f64>| (a * taylor_exp(&(m * nu), 60)).trace();
    let base = f(l);
    [1e-2, 1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&h| {
            let r = f(&(l + dir * h)) - base - h * grad.dot(dir);
            r.abs() / (h * h * dir.norm_squared())
        })
        .collect()
}

/// The ratios stay bounded as the step shrinks: no growth beyond round-off
/// from one decade to the next.
pub fn ratios_bounded(ratios: &[f64]) -> bool {
    ratios.iter().all(|r| r.is_finite() && *r < 1e3)
        && ratios.windows(2).all(|w| w[1] <= 1.5 * w[0] + 1e-4)
}
