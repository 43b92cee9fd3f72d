//! Symmetric eigendecomposition, spectral heat kernels, and the gradient of
//! `tr(A exp(nu L))` with respect to a symmetric `L`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `L = chi diag(lambda) chi^T` with orthonormal `chi` and ascending `lambda`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl EigenDecomposition {
    /// Eigenvectors, one per column, matching [`Self::values`].
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Eigenvalues in nondecreasing order.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Largest eigenvalue; the spectral norm for PSD matrices.
    pub fn max_value(&self) -> f64 {
        self.values[self.n() - 1]
    }

    /// `chi diag(f(lambda)) chi^T`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        let m = &scaled * self.vectors.transpose();
        (&m + m.transpose()) * 0.5
    }

    /// Rebuild the decomposed matrix.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.spectral_map(|x| x)
    }

    /// `chi^T a chi`.
    pub fn to_eigenbasis(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.vectors.tr_mul(a) * &self.vectors
    }

    /// `chi a chi^T`.
    pub fn from_eigenbasis(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        &self.vectors * a * self.vectors.transpose()
    }
}

/// Eigendecomposition of a symmetric matrix.
pub fn eig_sym(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix passed to eig_sym".into()));
    }
    let asymmetry = (a - a.transpose()).amax();
    if asymmetry > 1e-9 * a.amax().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let eig = a.clone().symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomposition { vectors, values })
}

/// `exp(-tau L)` evaluated on the spectrum of `L`.
pub fn heat_kernel(eig: &EigenDecomposition, tau: f64) -> Result<DMatrix<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::NegativeTau(tau));
    }
    Ok(eig.spectral_map(|lambda| (-tau * lambda).exp()))
}

/// `sinh(x) / x`, continuous at zero.
fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 + x * x / 6.0
    } else {
        x.sinh() / x
    }
}

/// First divided differences of `exp` on the given eigenvalues.
///
/// `b[i][j] = (e^a - e^b) / (a - b)` with `b[i][i] = e^a`, evaluated as
/// `exp((a + b) / 2) * sinhc((a - b) / 2)` which equals the quotient exactly
/// and has no cancellation when `a` and `b` are close.
pub fn divided_difference_matrix(lambda: &DVector<f64>) -> DMatrix<f64> {
    let n = lambda.len();
    DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (lambda[i], lambda[j]);
        if i == j || a == b {
            a.exp()
        } else {
            ((a + b) / 2.0).exp() * sinhc((a - b) / 2.0)
        }
    })
}

/// Accumulates `sum_k nu_k (chi^T A_k chi) o B(nu_k Lambda)` in the eigenbasis
/// of `L`, so that several trace-exponential gradients share a single
/// back-transformation.
pub struct TraceExpGradient<'a> {
    eig: &'a EigenDecomposition,
    acc: DMatrix<f64>,
}

impl<'a> TraceExpGradient<'a> {
    pub fn new(eig: &'a EigenDecomposition) -> Self {
        let n = eig.n();
        Self { eig, acc: DMatrix::zeros(n, n) }
    }

    /// Add `weight * grad_L tr(A exp(nu L))` given `a_hat = chi^T A chi`.
    ///
    /// Only the symmetric part of `a_hat` contributes, since the gradient is
    /// taken over symmetric perturbations.
    pub fn add_eigenbasis(&mut self, a_hat: &DMatrix<f64>, nu: f64, weight: f64) {
        if nu == 0.0 || weight == 0.0 {
            return;
        }
        let n = self.eig.n();
        let scaled = self.eig.values() * nu;
        let b = divided_difference_matrix(&scaled);
        let c = weight * nu * 0.5;
        for j in 0..n {
            for i in 0..n {
                self.acc[(i, j)] += c * (a_hat[(i, j)] + a_hat[(j, i)]) * b[(i, j)];
            }
        }
    }

    /// Add `weight * grad_L tr(A exp(nu L))`.
    pub fn add(&mut self, a: &DMatrix<f64>, nu: f64, weight: f64) {
        if nu == 0.0 || weight == 0.0 {
            return;
        }
        let a_hat = self.eig.to_eigenbasis(a);
        self.add_eigenbasis(&a_hat, nu, weight);
    }

    pub fn finish(self) -> DMatrix<f64> {
        let g = self.eig.from_eigenbasis(&self.acc);
        // exact symmetry
        (&g + g.transpose()) * 0.5
    }
}

/// `grad_L tr(A exp(nu L))` over symmetric perturbations of `L`:
/// `nu * chi ((chi^T A^T chi) o B(nu Lambda)) chi^T`, symmetrized.
pub fn grad_trace_exp(a: &DMatrix<f64>, eig: &EigenDecomposition, nu: f64) -> DMatrix<f64> {
    let mut g = TraceExpGradient::new(eig);
    g.add(a, nu, 1.0);
    g.finish()
}
