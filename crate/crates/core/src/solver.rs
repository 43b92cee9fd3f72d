//! Proximal alternating linearized minimization of
//!
//! ```text
//! ||X - D H||_F^2 + alpha sum_m ||h_m||_1 + beta ||L||_F^2
//! ```
//!
//! over sparse codes `H`, valid trace-normalized Laplacians `L` and diffusion
//! scales `tau >= 0`, where `D = [exp(-tau_1 L) ... exp(-tau_S L)]`.
//!
//! Each outer iteration performs, in order, a proximal gradient step on `H`
//! (soft thresholding), a proximal step on `L` (a QP, with its Lipschitz
//! constant found by backtracking), and a projected gradient step on `tau`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dictionary::{build_dictionary, HeatDictionary, SignalMatrix, SparseCodes, TauVector};
use crate::error::{Error, Result};
use crate::graphs::{random_valid_laplacian, threshold_laplacian, LaplacianMatrix, DEFAULT_EDGE_THRESHOLD};
use crate::qp::{solve_laplacian_qp, QpOptions};
use crate::spectral::{eig_sym, EigenDecomposition, TraceExpGradient};

/// Relative slack allowed on the descent condition for round-off.
pub const DESCENT_SLACK: f64 = 1e-12;

/// Upper bound on backtracking attempts per L-step.
pub const MAX_BACKTRACKS: usize = 100;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Weight of the l1 penalty on the codes.
    pub alpha: f64,
    /// Weight of the Frobenius penalty on the Laplacian.
    pub beta: f64,
    /// Initial diffusion scales; their count is the number of dictionary blocks.
    pub tau_init: Vec<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    /// Growth factor of the backtracking search.
    pub eta: f64,
    pub max_outer_iter: usize,
    /// Stop once consecutive objective values differ by less than this.
    pub obj_tol: f64,
    pub laplacian_threshold: f64,
    pub learn_tau: bool,
    /// Seed of the random initial Laplacian.
    pub rng_seed: u64,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-2,
            beta: 1e-1,
            tau_init: vec![2.5, 4.0],
            gamma1: 1.1,
            gamma2: 1.1,
            gamma3: 1.1,
            eta: 1.1,
            max_outer_iter: 1000,
            obj_tol: 1e-4,
            laplacian_threshold: DEFAULT_EDGE_THRESHOLD,
            learn_tau: true,
            rng_seed: 0,
            qp_tol: 1e-8,
            qp_max_iter: 5000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return bad(format!("alpha and beta must be >= 0 (got {}, {})", self.alpha, self.beta));
        }
        for (name, g) in [("gamma1", self.gamma1), ("gamma2", self.gamma2), ("gamma3", self.gamma3)] {
            if !(g > 1.0) {
                return bad(format!("{name} must be > 1, got {g}"));
            }
        }
        if !(self.eta > 1.0) {
            return bad(format!("eta must be > 1, got {}", self.eta));
        }
        if !(self.obj_tol >= 0.0) || !(self.laplacian_threshold >= 0.0) {
            return bad("tolerances must be non-negative".into());
        }
        TauVector::new(self.tau_init.clone())?;
        Ok(())
    }

    pub fn scales(&self) -> usize {
        self.tau_init.len()
    }

    pub fn qp_options(&self) -> QpOptions {
        QpOptions { tol: self.qp_tol, max_iter: self.qp_max_iter }
    }
}

/// Iterates of the alternating scheme.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub l: LaplacianMatrix,
    pub h: SparseCodes,
    /// Dictionary for the current `(l, taus)`; owns the eigendecomposition of `l`.
    pub dict: HeatDictionary,
    /// Last accepted Lipschitz estimate of the L-block, `None` before the first L-step.
    pub c2: Option<f64>,
    pub objective_history: Vec<f64>,
    pub iteration: usize,
}

impl SolverState {
    pub fn new(l: LaplacianMatrix, taus: TauVector, m: usize) -> Result<Self> {
        let eig = eig_sym(l.as_matrix())?;
        let n = l.n();
        let scales = taus.len();
        Ok(Self {
            l,
            h: SparseCodes::zeros(n, scales, m),
            dict: build_dictionary(eig, taus),
            c2: None,
            objective_history: Vec::new(),
            iteration: 0,
        })
    }

    pub fn taus(&self) -> &TauVector {
        self.dict.taus()
    }

    pub fn eig(&self) -> &EigenDecomposition {
        self.dict.eig()
    }
}

/// `X - D H`.
pub fn residual(x: &SignalMatrix, dict: &HeatDictionary, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(x.as_matrix() - dict.apply_matrix(h)?)
}

/// `||X - D H||_F^2`.
pub fn data_fit(x: &SignalMatrix, dict: &HeatDictionary, h: &DMatrix<f64>) -> Result<f64> {
    Ok(residual(x, dict, h)?.norm_squared())
}

/// `sum |h_ij|`.
pub fn l1_norm(h: &DMatrix<f64>) -> f64 {
    h.iter().map(|v| v.abs()).sum()
}

/// Full objective at the current iterate.
pub fn objective(x: &SignalMatrix, state: &SolverState, cfg: &SolverConfig) -> Result<f64> {
    let fit = data_fit(x, &state.dict, state.h.as_matrix())?;
    Ok(fit + cfg.alpha * l1_norm(state.h.as_matrix()) + cfg.beta * state.l.as_matrix().norm_squared())
}

/// Column `j` is `-2 D^T (x_j - D h_j)`.
pub fn grad_h(x: &SignalMatrix, dict: &HeatDictionary, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = residual(x, dict, h)?;
    Ok(dict.adjoint_apply(&r)? * -2.0)
}

/// Lipschitz constant of `grad_h`: `||2 D^T D||_F`.
pub fn lipschitz_h(dict: &HeatDictionary) -> f64 {
    dict.gram_frobenius_x2()
}

/// Codes and signals expressed in the eigenbasis of `L`.
struct EigenCoords {
    x: DMatrix<f64>,
    blocks: Vec<DMatrix<f64>>,
}

impl EigenCoords {
    fn new(x: &SignalMatrix, eig: &EigenDecomposition, h: &SparseCodes) -> Result<Self> {
        let n = eig.n();
        if x.n() != n || h.n() != n || x.m() != h.m() {
            return Err(Error::DimensionMismatch(format!(
                "signals {}x{}, codes {}x{} with {} scales, laplacian {n}x{n}",
                x.n(),
                x.m(),
                h.as_matrix().nrows(),
                h.m(),
                h.scales()
            )));
        }
        let chi = eig.vectors();
        Ok(Self {
            x: chi.tr_mul(x.as_matrix()),
            blocks: (0..h.scales()).map(|s| chi.tr_mul(&h.block(s))).collect(),
        })
    }
}

/// Diagonal of `a b^T`.
fn diag_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    (0..a.nrows()).map(|k| a.row(k).dot(&b.row(k))).collect()
}

/// `grad_L ||X - D H||_F^2`:
///
/// ```text
/// -2 sum_s grad tr(H_s X^T exp(-tau_s L)) + sum_{s,s'} grad tr(H_s' H_s^T exp(-(tau_s + tau_s') L))
/// ```
pub fn grad_l(x: &SignalMatrix, dict: &HeatDictionary, h: &SparseCodes) -> Result<DMatrix<f64>> {
    let eig = dict.eig();
    let coords = EigenCoords::new(x, eig, h)?;
    let taus = dict.taus().as_slice();
    let mut grad = TraceExpGradient::new(eig);
    for (s, p_s) in coords.blocks.iter().enumerate() {
        grad.add_eigenbasis(&(p_s * coords.x.transpose()), -taus[s], -2.0);
        for (t, p_t) in coords.blocks.iter().enumerate() {
            grad.add_eigenbasis(&(p_t * p_s.transpose()), -(taus[s] + taus[t]), 1.0);
        }
    }
    Ok(grad.finish())
}

/// `d/dtau_s ||X - D H||_F^2`:
///
/// ```text
/// 2 tr(H_s X^T L exp(-tau_s L)) - 2 sum_s' tr(H_s' H_s^T L exp(-(tau_s + tau_s') L))
/// ```
///
/// evaluated as weighted sums over the spectrum of `L`.
pub fn grad_tau(x: &SignalMatrix, dict: &HeatDictionary, h: &SparseCodes) -> Result<Vec<f64>> {
    let eig = dict.eig();
    let coords = EigenCoords::new(x, eig, h)?;
    let lambda = eig.values();
    let taus = dict.taus().as_slice();
    let weighted_trace = |diag: &[f64], scale: f64| -> f64 {
        diag.iter()
            .zip(lambda.iter())
            .map(|(d, &l)| d * l * (-scale * l).exp())
            .sum()
    };
    let mut out = Vec::with_capacity(taus.len());
    for (s, p_s) in coords.blocks.iter().enumerate() {
        let mut g = 2.0 * weighted_trace(&diag_of_product(p_s, &coords.x), taus[s]);
        for (t, p_t) in coords.blocks.iter().enumerate() {
            g -= 2.0 * weighted_trace(&diag_of_product(p_t, p_s), taus[s] + taus[t]);
        }
        out.push(g);
    }
    Ok(out)
}

/// Upper bound on the largest absolute row sum of the Hessian in `tau`:
/// `max_s' ||L||_2^2 (2 ||H_s'|| ||X|| + 4 sum_s ||H_s'|| ||H_s||)`.
pub fn lipschitz_tau(x: &SignalMatrix, eig: &EigenDecomposition, h: &SparseCodes) -> f64 {
    let spectral = eig.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let norms: Vec<f64> = (0..h.scales()).map(|s| h.block(s).norm()).collect();
    let x_norm = x.as_matrix().norm();
    let total: f64 = norms.iter().sum();
    norms
        .iter()
        .map(|&hs| spectral * spectral * (2.0 * hs * x_norm + 4.0 * hs * total))
        .fold(0.0, f64::max)
}

/// `sign(z) max(|z| - threshold, 0)`.
pub fn soft_threshold(z: f64, threshold: f64) -> f64 {
    if z > threshold {
        z - threshold
    } else if z < -threshold {
        z + threshold
    } else {
        0.0
    }
}

/// Proximal gradient step on the codes with step `1 / (gamma1 C1)`.
pub fn step_h(state: &SolverState, x: &SignalMatrix, cfg: &SolverConfig) -> Result<SparseCodes> {
    let c = cfg.gamma1 * lipschitz_h(&state.dict);
    let h = state.h.as_matrix();
    let g = grad_h(x, &state.dict, h)?;
    let threshold = cfg.alpha / c;
    let z = h - g / c;
    SparseCodes::new(z.map(|v| soft_threshold(v, threshold)), state.h.scales())
}

/// Both sides of the descent condition
/// `Z(L+) <= Z(L) + <grad, L+ - L> + C2/2 ||L+ - L||^2`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DescentCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl DescentCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + DESCENT_SLACK * self.rhs.abs().max(1.0)
    }
}

/// Outcome of one L-step.
#[derive(Debug, Clone)]
pub struct LStep {
    pub laplacian: LaplacianMatrix,
    /// Dictionary for the accepted Laplacian at the unchanged scales.
    pub dict: HeatDictionary,
    pub c2: f64,
    pub check: DescentCheck,
    pub backtracks: usize,
}

/// Record kept for every accepted L-step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LStepRecord {
    pub iteration: usize,
    pub c2: f64,
    pub backtracks: usize,
    pub check: DescentCheck,
}

fn initial_c2(dict: &HeatDictionary) -> f64 {
    let t = dict.taus().max();
    (lipschitz_h(dict) * t * t).max(1.0)
}

/// Proximal step on the Laplacian with backtracking on its Lipschitz estimate.
///
/// Starts from the previous accepted estimate divided by `eta` (or from
/// `||2 D^T D||_F max tau^2` on the first call) and multiplies it by
/// `eta^k` at the k-th rejection until the descent condition holds.
pub fn step_l(state: &SolverState, x: &SignalMatrix, cfg: &SolverConfig) -> Result<LStep> {
    let h = &state.h;
    let z_prev = data_fit(x, &state.dict, h.as_matrix())?;
    let grad = grad_l(x, &state.dict, h)?;
    let mut c2 = match state.c2 {
        Some(c) => (c / cfg.eta).max(f64::MIN_POSITIVE),
        None => initial_c2(&state.dict),
    };
    let qp_opts = cfg.qp_options();
    for backtracks in 0..=MAX_BACKTRACKS {
        let sol = solve_laplacian_qp(&grad, &state.l, cfg.gamma2 * c2, cfg.beta, &qp_opts)?;
        let candidate = sol.laplacian;
        let eig = eig_sym(candidate.as_matrix())?;
        let dict = build_dictionary(eig, state.taus().clone());
        let z_new = data_fit(x, &dict, h.as_matrix())?;
        let step = candidate.as_matrix() - state.l.as_matrix();
        let check = DescentCheck {
            lhs: z_new,
            rhs: z_prev + grad.dot(&step) + 0.5 * c2 * step.norm_squared(),
        };
        if check.holds() {
            return Ok(LStep { laplacian: candidate, dict, c2, check, backtracks });
        }
        c2 *= cfg.eta.powi(backtracks as i32 + 1);
        if !c2.is_finite() {
            break;
        }
    }
    Err(Error::BacktrackingFailed { attempts: MAX_BACKTRACKS, c2 })
}

/// Projected gradient step on the scales, `max(tau - grad / e_t, 0)` with
/// `e_t = gamma3 C3`.
pub fn step_tau(state: &SolverState, x: &SignalMatrix, cfg: &SolverConfig) -> Result<TauVector> {
    if !cfg.learn_tau {
        return Ok(state.taus().clone());
    }
    let e = cfg.gamma3 * lipschitz_tau(x, state.eig(), &state.h);
    if !(e > 0.0) {
        // zero codes: the data term does not depend on tau
        return Ok(state.taus().clone());
    }
    let g = grad_tau(x, &state.dict, &state.h)?;
    let next = state
        .taus()
        .as_slice()
        .iter()
        .zip(&g)
        .map(|(&t, &gs)| (t - gs / e).max(0.0))
        .collect();
    TauVector::new(next)
}

/// Result of [`learn`].
#[derive(Debug, Clone)]
pub struct LearnOutput {
    /// Final Laplacian after discarding weights below the configured threshold.
    pub laplacian: LaplacianMatrix,
    /// Final iterate before thresholding.
    pub raw_laplacian: LaplacianMatrix,
    pub codes: SparseCodes,
    pub taus: TauVector,
    /// Objective before the first iteration followed by one value per iteration.
    pub objective_history: Vec<f64>,
    pub l_steps: Vec<LStepRecord>,
    pub iterations: usize,
    /// True when the objective tolerance (rather than the iteration cap) stopped the run.
    pub converged: bool,
}

/// Run the alternating scheme; see [`learn_with_observer`].
pub fn learn(x: &SignalMatrix, cfg: &SolverConfig, l_init: Option<LaplacianMatrix>) -> Result<LearnOutput> {
    learn_with_observer(x, cfg, l_init, |_| Ok(()))
}

/// Run the alternating scheme, calling `observer` after every iteration.
///
/// Codes start at zero, the Laplacian at `l_init` or a random valid
/// Laplacian drawn from `cfg.rng_seed`.
pub fn learn_with_observer(
    x: &SignalMatrix,
    cfg: &SolverConfig,
    l_init: Option<LaplacianMatrix>,
    mut observer: impl FnMut(&SolverState) -> Result<()>,
) -> Result<LearnOutput> {
    cfg.validate()?;
    let n = x.n();
    let l0 = match l_init {
        Some(l) => {
            if l.n() != n {
                return Err(Error::DimensionMismatch(format!(
                    "initial laplacian has {} vertices, signals have {n}",
                    l.n()
                )));
            }
            l
        }
        None => random_valid_laplacian(n, cfg.rng_seed)?,
    };
    let taus = TauVector::new(cfg.tau_init.clone())?;
    let mut state = SolverState::new(l0, taus, x.m())?;
    let mut l_steps = Vec::new();
    let first = objective(x, &state, cfg)?;
    state.objective_history.push(first);
    let mut converged = false;

    while state.iteration < cfg.max_outer_iter {
        state.iteration += 1;
        state.h = step_h(&state, x, cfg)?;

        let lstep = step_l(&state, x, cfg)?;
        l_steps.push(LStepRecord {
            iteration: state.iteration,
            c2: lstep.c2,
            backtracks: lstep.backtracks,
            check: lstep.check,
        });
        state.l = lstep.laplacian;
        state.dict = lstep.dict;
        state.c2 = Some(lstep.c2);

        let taus = step_tau(&state, x, cfg)?;
        if &taus != state.taus() {
            state.dict = state.dict.clone().with_taus(taus);
        }

        let value = objective(x, &state, cfg)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("objective at iteration {}", state.iteration)));
        }
        let prev = *state.objective_history.last().expect("history starts non-empty");
        state.objective_history.push(value);
        observer(&state)?;
        if (prev - value).abs() < cfg.obj_tol {
            converged = true;
            break;
        }
    }

    Ok(LearnOutput {
        laplacian: threshold_laplacian(&state.l, cfg.laplacian_threshold),
        raw_laplacian: state.l,
        codes: state.h,
        taus: state.dict.taus().clone(),
        objective_history: state.objective_history,
        l_steps,
        iterations: state.iteration,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::generate_synthetic_signals;
    use crate::graphs::{generate_rbf_graph, laplacian_from_weights, normalize_trace};
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn setup(n: usize, taus: Vec<f64>, m: usize, seed: u64) -> (SignalMatrix, SolverState) {
        let l = random_valid_laplacian(n, seed).unwrap();
        let mut rng = rng_from_seed(seed + 100);
        let s = taus.len();
        let x = SignalMatrix::new(DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() - 0.5)).unwrap();
        let h = SparseCodes::new(DMatrix::from_fn(n * s, m, |_, _| rng.random::<f64>() - 0.5), s)
            .unwrap();
        let mut state = SolverState::new(l, TauVector::new(taus).unwrap(), m).unwrap();
        state.h = h;
        (x, state)
    }

    #[test]
    fn objective_of_zero_signals_is_frobenius_penalty() {
        let (_, mut state) = setup(5, vec![1.0], 3, 1);
        state.h = SparseCodes::zeros(5, 1, 3);
        let x = SignalMatrix::new(DMatrix::zeros(5, 3)).unwrap();
        let cfg = SolverConfig { beta: 0.3, tau_init: vec![1.0], ..Default::default() };
        let v = objective(&x, &state, &cfg).unwrap();
        assert!((v - 0.3 * state.l.as_matrix().norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn objective_of_exact_fit_is_zero() {
        let (_, state) = setup(5, vec![1.0, 2.0], 3, 2);
        let x = SignalMatrix::new(state.dict.apply_matrix(state.h.as_matrix()).unwrap()).unwrap();
        let cfg = SolverConfig { alpha: 0.0, beta: 0.0, ..Default::default() };
        assert!(objective(&x, &state, &cfg).unwrap().abs() < 1e-20);
    }

    #[test]
    fn objective_matches_term_by_term_recomputation() {
        let (x, state) = setup(6, vec![0.5, 2.0], 4, 3);
        let cfg = SolverConfig { alpha: 0.7, beta: 0.2, ..Default::default() };
        let d = state.dict.atoms();
        let fit = (x.as_matrix() - &d * state.h.as_matrix()).norm_squared();
        let l1: f64 = state.h.as_matrix().iter().map(|v| v.abs()).sum();
        let fro: f64 = state.l.as_matrix().iter().map(|v| v * v).sum();
        let expect = fit + 0.7 * l1 + 0.2 * fro;
        assert!((objective(&x, &state, &cfg).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn code_gradient_special_cases() {
        let (x, state) = setup(5, vec![1.0], 3, 4);
        let fit = state.dict.apply_matrix(state.h.as_matrix()).unwrap();
        let exact = SignalMatrix::new(fit).unwrap();
        assert!(grad_h(&exact, &state.dict, state.h.as_matrix()).unwrap().amax() < 1e-12);
        let g0 = grad_h(&x, &state.dict, &DMatrix::zeros(5, 3)).unwrap();
        let expect = state.dict.atoms().transpose() * x.as_matrix() * -2.0;
        assert!((g0 - expect).amax() < 1e-12);
    }

    #[test]
    fn laplacian_gradient_vanishes_without_l_dependence() {
        let (x, mut state) = setup(5, vec![1.0, 2.0], 3, 5);
        state.h = SparseCodes::zeros(5, 2, 3);
        assert_eq!(grad_l(&x, &state.dict, &state.h).unwrap(), DMatrix::zeros(5, 5));
        let (x, state) = setup(5, vec![0.0], 3, 6);
        assert_eq!(grad_l(&x, &state.dict, &state.h).unwrap(), DMatrix::zeros(5, 5));
    }

    #[test]
    fn fused_gradient_equals_sum_of_trace_gradients() {
        use crate::spectral::grad_trace_exp;
        let (x, state) = setup(6, vec![0.7, 2.5], 4, 7);
        let taus = [0.7, 2.5];
        let mut expect = DMatrix::zeros(6, 6);
        let hs: Vec<DMatrix<f64>> = (0..2).map(|s| state.h.block(s).into_owned()).collect();
        for s in 0..2 {
            expect -= grad_trace_exp(&(&hs[s] * x.as_matrix().transpose()), state.eig(), -taus[s]) * 2.0;
            for t in 0..2 {
                expect += grad_trace_exp(&(&hs[t] * hs[s].transpose()), state.eig(), -(taus[s] + taus[t]));
            }
        }
        let fused = grad_l(&x, &state.dict, &state.h).unwrap();
        assert!((fused - expect).amax() < 1e-10);
    }

    #[test]
    fn tau_gradient_special_cases() {
        let (x, mut state) = setup(5, vec![1.0, 2.0], 3, 8);
        state.h = SparseCodes::zeros(5, 2, 3);
        assert_eq!(grad_tau(&x, &state.dict, &state.h).unwrap(), vec![0.0, 0.0]);
        let (_, state) = setup(5, vec![1.5], 3, 9);
        let exact = SignalMatrix::new(state.dict.apply_matrix(state.h.as_matrix()).unwrap()).unwrap();
        assert!(grad_tau(&exact, &state.dict, &state.h).unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn soft_threshold_boundary() {
        assert_eq!(soft_threshold(0.5, 0.5), 0.0);
        assert_eq!(soft_threshold(-0.5, 0.5), 0.0);
        assert_eq!(soft_threshold(2.0, 0.5), 1.5);
        assert_eq!(soft_threshold(-2.0, 0.5), -1.5);
        assert_eq!(soft_threshold(0.3, 0.0), 0.3);
    }

    #[test]
    fn code_step_without_sparsity_is_gradient_step() {
        let (x, state) = setup(5, vec![1.0], 3, 10);
        let cfg = SolverConfig { alpha: 0.0, tau_init: vec![1.0], ..Default::default() };
        let c = cfg.gamma1 * lipschitz_h(&state.dict);
        let g = grad_h(&x, &state.dict, state.h.as_matrix()).unwrap();
        let expect = state.h.as_matrix() - g / c;
        assert!((step_h(&state, &x, &cfg).unwrap().as_matrix() - expect).amax() < 1e-15);
    }

    #[test]
    fn code_step_on_identity_dictionary_by_hand() {
        // N=2, tau=0: D = I, C1 = ||2I||_F = 2 sqrt(2), c = 1.1 * C1.
        // From h = 0 with x = (1, 0): z = 2x / c, then soft threshold by alpha / c.
        let l = random_valid_laplacian(2, 0).unwrap();
        let state = SolverState::new(l, TauVector::new(vec![0.0]).unwrap(), 1).unwrap();
        let x = SignalMatrix::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let alpha = 0.1;
        let cfg = SolverConfig { alpha, tau_init: vec![0.0], ..Default::default() };
        let c = 1.1 * 2.0 * 2f64.sqrt();
        let h1 = step_h(&state, &x, &cfg).unwrap();
        assert!((h1.as_matrix()[(0, 0)] - (2.0 - alpha) / c).abs() < 1e-15);
        assert_eq!(h1.as_matrix()[(1, 0)], 0.0);
    }

    #[test]
    fn code_step_decreases_surrogate() {
        let (x, state) = setup(6, vec![1.0, 3.0], 4, 11);
        let cfg = SolverConfig { alpha: 0.05, tau_init: vec![1.0, 3.0], ..Default::default() };
        let before = data_fit(&x, &state.dict, state.h.as_matrix()).unwrap()
            + cfg.alpha * l1_norm(state.h.as_matrix());
        let h = step_h(&state, &x, &cfg).unwrap();
        let after = data_fit(&x, &state.dict, h.as_matrix()).unwrap() + cfg.alpha * l1_norm(h.as_matrix());
        assert!(after <= before);
    }

    #[test]
    fn laplacian_step_without_data_accepts_immediately() {
        let (x, mut state) = setup(6, vec![1.0, 3.0], 4, 12);
        state.h = SparseCodes::zeros(6, 2, 4);
        let cfg = SolverConfig { beta: 0.5, tau_init: vec![1.0, 3.0], ..Default::default() };
        let step = step_l(&state, &x, &cfg).unwrap();
        assert_eq!(step.backtracks, 0);
        // minimizer of beta ||L||^2 + d/2 ||L - Lt||^2 over the feasible set
        let d = cfg.gamma2 * step.c2;
        let direct =
            solve_laplacian_qp(&DMatrix::zeros(6, 6), &state.l, d, cfg.beta, &cfg.qp_options()).unwrap();
        assert!((step.laplacian.as_matrix() - direct.laplacian.as_matrix()).amax() < 1e-12);
    }

    #[test]
    fn laplacian_step_satisfies_descent_condition() {
        let (x, state) = setup(7, vec![0.5, 2.0], 5, 13);
        let cfg = SolverConfig { tau_init: vec![0.5, 2.0], ..Default::default() };
        let step = step_l(&state, &x, &cfg).unwrap();
        let z_new = data_fit(&x, &step.dict, state.h.as_matrix()).unwrap();
        let z_old = data_fit(&x, &state.dict, state.h.as_matrix()).unwrap();
        let g = grad_l(&x, &state.dict, &state.h).unwrap();
        let diff = step.laplacian.as_matrix() - state.l.as_matrix();
        let rhs = z_old + g.dot(&diff) + 0.5 * step.c2 * diff.norm_squared();
        assert!(z_new <= rhs + 1e-10);
        assert!(LaplacianMatrix::new(step.laplacian.as_matrix().clone()).is_ok());
    }

    #[test]
    fn tau_step_fixed_points_and_clamping() {
        let (x, mut state) = setup(5, vec![1.0, 2.0], 3, 14);
        let cfg = SolverConfig { tau_init: vec![1.0, 2.0], ..Default::default() };
        // zero gradient: zero codes
        let h = state.h.clone();
        state.h = SparseCodes::zeros(5, 2, 3);
        assert_eq!(step_tau(&state, &x, &cfg).unwrap().as_slice(), &[1.0, 2.0]);
        state.h = h;
        let off = SolverConfig { learn_tau: false, ..cfg.clone() };
        assert_eq!(step_tau(&state, &x, &off).unwrap().as_slice(), &[1.0, 2.0]);
        // stepping from tau = 0 against a positive gradient stays at zero
        let zero = state.dict.clone().with_taus(TauVector::new(vec![0.0, 0.0]).unwrap());
        let g = grad_tau(&x, &zero, &state.h).unwrap();
        state.dict = zero;
        let next = step_tau(&state, &x, &cfg).unwrap();
        for (t, gs) in next.as_slice().iter().zip(&g) {
            if *gs > 0.0 {
                assert_eq!(*t, 0.0);
            }
        }
    }

    #[test]
    fn learn_rejects_mismatched_initialization() {
        let x = SignalMatrix::new(DMatrix::from_element(4, 3, 1.0)).unwrap();
        let l = random_valid_laplacian(5, 0).unwrap();
        assert!(learn(&x, &SolverConfig::default(), Some(l)).is_err());
        assert!(SignalMatrix::new(DMatrix::zeros(4, 0)).is_err());
        let bad = SolverConfig { gamma2: 1.0, ..Default::default() };
        assert!(learn(&x, &bad, None).is_err());
    }

    #[test]
    fn short_run_descends_and_keeps_fixed_scales() {
        let w = generate_rbf_graph(12, 0.5, 0.75, 3).unwrap();
        let l = normalize_trace(&laplacian_from_weights(&w)).unwrap();
        let dict = build_dictionary(eig_sym(l.as_matrix()).unwrap(), TauVector::new(vec![2.5, 4.0]).unwrap());
        let (x, _) = generate_synthetic_signals(&dict, 40, 3, 0.0, 1).unwrap();
        let cfg = SolverConfig { max_outer_iter: 50, learn_tau: false, obj_tol: 0.0, ..Default::default() };
        let out = learn(&x, &cfg, None).unwrap();
        assert_eq!(out.taus.as_slice(), &[2.5, 4.0]);
        assert_eq!(out.iterations, 50);
        for w in out.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
        assert!(out.l_steps.iter().all(|r| r.check.holds()));
        assert!(LaplacianMatrix::new(out.laplacian.as_matrix().clone()).is_ok());
    }
}
