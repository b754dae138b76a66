//! EM estimation of the logistic links for the null probability
//! `π(x) = logistic(x'θ)` and the surrogate shape `k(x) = logistic(x'β)`.
//!
//! The objective is the surrogate marginal log-likelihood
//! `Σ log{π_i + (1 - π_i)(1 - k_i) p_i^(-k_i)}`. Treating the null
//! indicator as latent, the E-step posterior of the alternative is
//! `γ_i = 1 - ψ_i(p_i)` and the expected complete-data objective splits
//! into two independent pieces:
//!
//! * `Σ (1 - γ_i) log π_i + γ_i log(1 - π_i)`: a logistic regression with
//!   soft labels, solved by IRLS;
//! * `Σ γ_i {log(1 - k_i) - k_i log p_i}`: maximized over β by damped
//!   Newton, with a gradient step whenever the Hessian is not negative
//!   definite.
//!
//! Every accepted M-step move is checked not to decrease its piece of the
//! objective, which keeps the observed log-likelihood nondecreasing.
//! Coefficients are confined to a box `[-bound, bound]` per coordinate.
//!
//! Per-hypothesis sums are accumulated over fixed-size chunks and combined
//! in chunk order, so results do not depend on the worker count.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::design::DesignMatrix;
use crate::error::{CamtError, Result};
use crate::surrogate::{
    check_eps, logistic, softplus, BetaParam, NullProb, PValue, DEFAULT_EPS1, DEFAULT_EPS2,
};

const CHUNK: usize = 4096;

/// Eigenvalues below this fraction of the largest one are treated as zero.
const EIGEN_RTOL: f64 = 1e-10;

/// Coefficients of the two logistic links, intercepts first.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefVector {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
}

impl CoefVector {
    /// Starting point: `π ≈ 0.9` and `k = 0.5` for every hypothesis.
    pub fn initial(ncols: usize) -> Self {
        let mut theta = vec![0.0; ncols];
        theta[0] = (0.9f64 / 0.1).ln();
        CoefVector { theta, beta: vec![0.0; ncols] }
    }

    fn max_abs_diff(&self, other: &CoefVector) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .chain(self.beta.iter().zip(&other.beta))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn check(&self, ncols: usize) -> Result<()> {
        if self.theta.len() != ncols || self.beta.len() != ncols {
            return Err(CamtError::Dimension(format!(
                "coefficient lengths ({}, {}) do not match {ncols} design columns",
                self.theta.len(),
                self.beta.len()
            )));
        }
        if self.theta.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(CamtError::Numerical("non-finite coefficient".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop once `|Δℓ| <= rel_tol · max(|ℓ|, 1)`.
    pub rel_tol: f64,
    pub max_newton_iter: usize,
    pub max_halvings: usize,
    pub coef_bound: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 200,
            rel_tol: 1e-6,
            max_newton_iter: 25,
            max_halvings: 20,
            coef_bound: 15.0,
            eps1: DEFAULT_EPS1,
            eps2: DEFAULT_EPS2,
        }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<()> {
        check_eps(self.eps1, self.eps2)?;
        if self.max_iter == 0 || !(self.rel_tol > 0.0) || !(self.coef_bound > 0.0) {
            return Err(CamtError::Config(format!("invalid EM settings: {self:?}")));
        }
        Ok(())
    }
}

/// Log-likelihood path of one fit. `loglik[0]` is the starting value and
/// `loglik[j]` the value after iteration `j`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmTrace {
    pub loglik: Vec<f64>,
    /// Max-norm of the coefficient change at each iteration.
    pub param_change: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-hypothesis estimates consumed by the thresholding step.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedHypotheses {
    pub pi_hat: Vec<NullProb>,
    pub k_hat: Vec<BetaParam>,
}

impl FittedHypotheses {
    /// Winsorized `π̂_i` and clamped `k̂_i` from coefficients.
    pub fn from_coef(
        coef: &CoefVector,
        design: &DesignMatrix,
        eps1: f64,
        eps2: f64,
    ) -> Result<Self> {
        coef.check(design.ncols())?;
        let m = design.nrows();
        let mut pi_hat = Vec::with_capacity(m);
        let mut k_hat = Vec::with_capacity(m);
        for i in 0..m {
            pi_hat.push(NullProb::winsorized(logistic(design.dot(i, &coef.theta)), eps1, eps2)?);
            k_hat.push(BetaParam::from_logit(design.dot(i, &coef.beta)));
        }
        Ok(FittedHypotheses { pi_hat, k_hat })
    }

    pub fn len(&self) -> usize {
        self.pi_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi_hat.is_empty()
    }
}

/// Output of [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub coef: CoefVector,
    pub fitted: FittedHypotheses,
    pub trace: EmTrace,
    /// Non-fatal issues, e.g. a sample too small for the design.
    pub warnings: Vec<String>,
}

/// Design plus `-log p`, the only per-hypothesis data the EM loop reads.
struct Problem<'a> {
    design: &'a DesignMatrix,
    neg_log_p: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(design: &'a DesignMatrix, pvals: &[PValue]) -> Result<Self> {
        if design.nrows() != pvals.len() {
            return Err(CamtError::Dimension(format!(
                "{} p-values for a design with {} rows",
                pvals.len(),
                design.nrows()
            )));
        }
        Ok(Problem { design, neg_log_p: pvals.iter().map(|p| -p.get().ln()).collect() })
    }

    fn m(&self) -> usize {
        self.neg_log_p.len()
    }

    fn d(&self) -> usize {
        self.design.ncols()
    }
}

/// Sum `width`-long accumulators over fixed chunks, combined in chunk order.
fn reduce<F>(m: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(Range<usize>, &mut [f64]) + Sync,
{
    let parts: Vec<Vec<f64>> = (0..m.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; width];
            f(c * CHUNK..((c + 1) * CHUNK).min(m), &mut acc);
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for part in parts {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    total
}

/// Same chunking as [`reduce`] for per-hypothesis outputs.
fn map_chunks<F>(m: usize, out: &mut [f64], acc_width: usize, f: F) -> Vec<f64>
where
    F: Fn(Range<usize>, &mut [f64], &mut [f64]) + Sync,
{
    let parts: Vec<Vec<f64>> = out
        .par_chunks_mut(CHUNK)
        .enumerate()
        .map(|(c, slot)| {
            let mut acc = vec![0.0; acc_width];
            f(c * CHUNK..((c + 1) * CHUNK).min(m), slot, &mut acc);
            acc
        })
        .collect();
    let mut total = vec![0.0; acc_width];
    for part in parts {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    total
}

#[inline]
fn dot(row: &[f64], coef: &[f64]) -> f64 {
    row.iter().zip(coef).map(|(a, b)| a * b).sum()
}

/// Adds `w · x x'` (upper triangle only) into `hess` and `g · x` into `grad`.
#[inline]
fn accumulate(row: &[f64], g: f64, w: f64, grad: &mut [f64], hess: &mut [f64]) {
    let d = row.len();
    for a in 0..d {
        grad[a] += g * row[a];
        let wa = w * row[a];
        for b in a..d {
            hess[a * d + b] += wa * row[b];
        }
    }
}

/// One pass computing `γ` into `gamma` and returning the log-likelihood.
fn e_pass(prob: &Problem, coef: &CoefVector, gamma: &mut [f64]) -> f64 {
    let design = prob.design;
    let neg_log_p = &prob.neg_log_p;
    map_chunks(prob.m(), gamma, 1, |range, slot, acc| {
        for (j, i) in range.enumerate() {
            let row = design.row(i);
            let eta_t = dot(row, &coef.theta);
            let eta_b = dot(row, &coef.beta);
            let pi = logistic(eta_t);
            let one_minus_pi = logistic(-eta_t);
            let k = logistic(eta_b);
            let h = logistic(-eta_b) * (k * neg_log_p[i]).exp();
            let alt = one_minus_pi * h;
            let denom = pi + alt;
            slot[j] = alt / denom;
            acc[0] += denom.ln();
        }
    })[0]
}

/// Value, gradient and *negated* Hessian (upper triangle) of one M-step piece.
struct Quadratic {
    value: f64,
    grad: Vec<f64>,
    info: Vec<f64>,
}

impl Quadratic {
    fn from_acc(acc: Vec<f64>, d: usize) -> Self {
        let value = acc[0];
        let grad = acc[1..1 + d].to_vec();
        let info = acc[1 + d..].to_vec();
        Quadratic { value, grad, info }
    }

    fn info_matrix(&self, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, d, |a, b| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            self.info[lo * d + hi]
        })
    }
}

/// Soft-label logistic objective for θ with labels `1 - γ`.
fn theta_piece(prob: &Problem, gamma: &[f64], theta: &[f64]) -> Quadratic {
    let d = prob.d();
    let design = prob.design;
    let acc = reduce(prob.m(), 1 + d + d * d, |range, acc| {
        let (value, rest) = acc.split_at_mut(1);
        let (grad, hess) = rest.split_at_mut(d);
        for i in range {
            let row = design.row(i);
            let eta = dot(row, theta);
            let y = 1.0 - gamma[i];
            let pi = logistic(eta);
            value[0] -= y * softplus(-eta) + (1.0 - y) * softplus(eta);
            accumulate(row, y - pi, pi * logistic(-eta), grad, hess);
        }
    });
    Quadratic::from_acc(acc, d)
}

/// `Σ γ_i {log(1 - k_i) + k_i (-log p_i)}` and its derivatives in β.
fn beta_piece(prob: &Problem, gamma: &[f64], beta: &[f64]) -> Quadratic {
    let d = prob.d();
    let design = prob.design;
    let neg_log_p = &prob.neg_log_p;
    let acc = reduce(prob.m(), 1 + d + d * d, |range, acc| {
        let (value, rest) = acc.split_at_mut(1);
        let (grad, hess) = rest.split_at_mut(d);
        for i in range {
            let row = design.row(i);
            let eta = dot(row, beta);
            let k = logistic(eta);
            let kk = k * logistic(-eta);
            let l = neg_log_p[i];
            let g = gamma[i];
            value[0] += g * (k * l - softplus(eta));
            // d/dη = -k + k(1-k)L ; d²/dη² = k(1-k){L(1-2k) - 1}
            accumulate(row, g * (kk * l - k), g * kk * (1.0 - l * (1.0 - 2.0 * k)), grad, hess);
        }
    });
    Quadratic::from_acc(acc, d)
}

enum Direction {
    Newton(Vec<f64>),
    Gradient(Vec<f64>),
}

/// Newton direction `info⁺ grad` when `info` is positive semidefinite,
/// otherwise a scaled gradient direction.
fn direction(q: &Quadratic, d: usize) -> Direction {
    let eig = SymmetricEigen::new(q.info_matrix(d));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let grad = DVector::from_column_slice(&q.grad);
    if !(scale > 0.0) || !scale.is_finite() {
        return Direction::Gradient(q.grad.clone());
    }
    let tol = EIGEN_RTOL * scale;
    if eig.eigenvalues.iter().any(|&v| v < -tol) {
        return Direction::Gradient(q.grad.iter().map(|g| g / scale).collect());
    }
    let mut step = DVector::zeros(d);
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            let v = eig.eigenvectors.column(j);
            step += v * (v.dot(&grad) / lambda);
        }
    }
    Direction::Newton(step.iter().copied().collect())
}

/// Maximize one M-step piece from `start`, never accepting a decrease.
fn ascend<F>(start: &[f64], cfg: &EmConfig, d: usize, piece: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Quadratic,
{
    let mut current = start.to_vec();
    let mut q = piece(&current);
    for _ in 0..cfg.max_newton_iter {
        let dir = match direction(&q, d) {
            Direction::Newton(step) => {
                let decrement: f64 = step.iter().zip(&q.grad).map(|(s, g)| s * g).sum();
                if decrement <= 1e-12 * (1.0 + q.value.abs()) {
                    break;
                }
                step
            }
            Direction::Gradient(step) => step,
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let cand: Vec<f64> = current
                .iter()
                .zip(&dir)
                .map(|(c, s)| (c + t * s).clamp(-cfg.coef_bound, cfg.coef_bound))
                .collect();
            let trial = piece(&cand);
            if trial.value.is_finite() && trial.value >= q.value {
                accepted = Some((cand, trial));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, trial)) => {
                let moved = cand.iter().zip(&current).any(|(a, b)| a != b);
                current = cand;
                q = trial;
                if !moved {
                    break;
                }
            }
            None => break,
        }
    }
    current
}

fn m_step_inner(prob: &Problem, gamma: &[f64], coef: &CoefVector, cfg: &EmConfig) -> CoefVector {
    let d = prob.d();
    let theta = ascend(&coef.theta, cfg, d, |th| theta_piece(prob, gamma, th));
    let beta = ascend(&coef.beta, cfg, d, |be| beta_piece(prob, gamma, be));
    CoefVector { theta, beta }
}

/// Surrogate marginal log-likelihood `Σ log{π_i + (1 - π_i) h_i(p_i)}`.
pub fn loglik(params: &CoefVector, design: &DesignMatrix, pvals: &[PValue]) -> Result<f64> {
    params.check(design.ncols())?;
    let prob = Problem::new(design, pvals)?;
    let mut gamma = vec![0.0; prob.m()];
    Ok(e_pass(&prob, params, &mut gamma))
}

/// Analytic gradient of [`loglik`] with respect to θ and β.
pub fn loglik_gradient(
    params: &CoefVector,
    design: &DesignMatrix,
    pvals: &[PValue],
) -> Result<CoefVector> {
    params.check(design.ncols())?;
    let prob = Problem::new(design, pvals)?;
    let d = prob.d();
    let neg_log_p = &prob.neg_log_p;
    let acc = reduce(prob.m(), 2 * d, |range, acc| {
        let (gt, gb) = acc.split_at_mut(d);
        for i in range {
            let row = design.row(i);
            let eta_t = dot(row, &params.theta);
            let eta_b = dot(row, &params.beta);
            let pi = logistic(eta_t);
            let one_minus_pi = logistic(-eta_t);
            let k = logistic(eta_b);
            let e = (k * neg_log_p[i]).exp();
            let h = (1.0 - k) * e;
            let denom = pi + one_minus_pi * h;
            let dh_dk = e * ((1.0 - k) * neg_log_p[i] - 1.0);
            let ct = pi * one_minus_pi * (1.0 - h) / denom;
            let cb = one_minus_pi * dh_dk * k * (1.0 - k) / denom;
            for a in 0..d {
                gt[a] += ct * row[a];
                gb[a] += cb * row[a];
            }
        }
    });
    Ok(CoefVector { theta: acc[..d].to_vec(), beta: acc[d..].to_vec() })
}

/// Posterior probability of the alternative for each hypothesis,
/// `γ_i = (1 - π_i) h_i(p_i) / {π_i + (1 - π_i) h_i(p_i)}`.
pub fn e_step(params: &CoefVector, design: &DesignMatrix, pvals: &[PValue]) -> Result<Vec<f64>> {
    params.check(design.ncols())?;
    let prob = Problem::new(design, pvals)?;
    let mut gamma = vec![0.0; prob.m()];
    e_pass(&prob, params, &mut gamma);
    Ok(gamma)
}

/// One M-step: IRLS for θ on soft labels `1 - γ`, then damped Newton for β.
pub fn m_step(
    gamma: &[f64],
    params: &CoefVector,
    design: &DesignMatrix,
    pvals: &[PValue],
    config: &EmConfig,
) -> Result<CoefVector> {
    config.validate()?;
    params.check(design.ncols())?;
    let prob = Problem::new(design, pvals)?;
    if gamma.len() != prob.m() {
        return Err(CamtError::Dimension(format!(
            "{} posterior weights for {} hypotheses",
            gamma.len(),
            prob.m()
        )));
    }
    if gamma.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(CamtError::Domain("posterior weights must lie in [0, 1]".into()));
    }
    let next = m_step_inner(&prob, gamma, params, config);
    next.check(prob.d())?;
    Ok(next)
}

/// Fit θ and β by EM from [`CoefVector::initial`].
pub fn fit(design: &DesignMatrix, pvals: &[PValue], config: &EmConfig) -> Result<ModelFit> {
    fit_from(design, pvals, config, CoefVector::initial(design.ncols()))
}

/// Fit θ and β by EM from a caller-supplied starting point.
pub fn fit_from(
    design: &DesignMatrix,
    pvals: &[PValue],
    config: &EmConfig,
    start: CoefVector,
) -> Result<ModelFit> {
    config.validate()?;
    start.check(design.ncols())?;
    let prob = Problem::new(design, pvals)?;
    let mut warnings = Vec::new();
    if prob.m() < 10 * prob.d() {
        warnings.push(format!(
            "only {} hypotheses for {} coefficients per link; estimates may be unstable",
            prob.m(),
            prob.d()
        ));
    }

    let mut coef = start;
    let mut gamma = vec![0.0; prob.m()];
    let mut ll = e_pass(&prob, &coef, &mut gamma);
    if !ll.is_finite() {
        return Err(CamtError::Numerical("non-finite log-likelihood at the starting point".into()));
    }
    let mut trace = EmTrace { loglik: vec![ll], ..EmTrace::default() };

    for _ in 0..config.max_iter {
        let next = m_step_inner(&prob, &gamma, &coef, config);
        let next_ll = e_pass(&prob, &next, &mut gamma);
        if !next_ll.is_finite() {
            return Err(CamtError::Numerical(format!(
                "log-likelihood became non-finite after iteration {}",
                trace.iterations + 1
            )));
        }
        trace.param_change.push(next.max_abs_diff(&coef));
        trace.loglik.push(next_ll);
        trace.iterations += 1;
        coef = next;
        let done = (next_ll - ll).abs() <= config.rel_tol * ll.abs().max(1.0);
        ll = next_ll;
        if done {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged {
        warnings.push(format!(
            "EM stopped after {} iterations without meeting the tolerance",
            trace.iterations
        ));
    }

    let fitted = FittedHypotheses::from_coef(&coef, design, config.eps1, config.eps2)?;
    Ok(ModelFit { coef, fitted, trace, warnings })
}
