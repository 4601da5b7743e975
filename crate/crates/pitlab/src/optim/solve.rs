//! Box-constrained first-order solver: projected gradient descent with a
//! directional Armijo line search. Deterministic, allocation-light, and
//! instrumented with evaluation counters so callers can convert solver work
//! into modeled runtime.

use super::{CompiledProblem, OptimError};
use serde::{Deserialize, Serialize};

/// Anything the solver can minimize. Implemented by [`CompiledProblem`];
/// tests substitute hand-written objectives.
pub trait Objective {
    /// Value only (may be non-finite; the line search rejects such points).
    fn eval(&mut self, x: &[f64]) -> f64;
    /// Value and gradient at `x`.
    fn eval_grad(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), OptimError>;
}

impl Objective for CompiledProblem {
    fn eval(&mut self, x: &[f64]) -> f64 {
        CompiledProblem::eval(self, x)
    }

    fn eval_grad(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), OptimError> {
        CompiledProblem::eval_grad(self, x)
    }
}

/// Per-coordinate box `lo[i] <= x[i] <= hi[i]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        debug_assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h));
        Self { lo, hi }
    }

    /// Unbounded box of the given dimension.
    pub fn free(dim: usize) -> Self {
        Self { lo: vec![f64::NEG_INFINITY; dim], hi: vec![f64::INFINITY; dim] }
    }
}

/// Euclidean projection onto the box (coordinate-wise clamp).
pub fn project_box(x: &[f64], bounds: &BoxBounds) -> Vec<f64> {
    x.iter()
        .zip(bounds.lo.iter().zip(&bounds.hi))
        .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
        .collect()
}

/// Softplus-squared one-sided penalty for `v <= margin`: zero-ish inside,
/// asymptotically `(v - margin)^2` outside, smooth everywhere.
pub fn smooth_hinge(v: f64, margin: f64, sharpness: f64) -> f64 {
    let s = super::tape::softplus(sharpness * (v - margin)) / sharpness;
    s * s
}

/// Central finite differences; the reference gradient for tape checks.
pub fn finite_diff_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = x[i];
            xp[i] = xi + h;
            let fp = f(&xp);
            xp[i] = xi - h;
            let fm = f(&xp);
            xp[i] = xi;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveConfig {
    pub max_iters: usize,
    /// Initial step length for the first iteration; later iterations start
    /// from twice the last accepted step.
    pub step0: f64,
    pub shrink: f64,
    /// Armijo sufficient-decrease coefficient `c` in
    /// `f(x+) <= f(x) + c * g . (x+ - x)`.
    pub armijo_c: f64,
    pub max_backtracks: usize,
    /// Converged when the infinity norm of the projected gradient step
    /// drops below this.
    pub tol_grad: f64,
    /// Converged when the relative cost decrease drops below this.
    pub tol_cost: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iters: 60,
            step0: 1e-2,
            shrink: 0.5,
            armijo_c: 1e-4,
            max_backtracks: 30,
            tol_grad: 1e-7,
            tol_cost: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    /// Stationarity or stall within line-search resolution.
    Converged,
    /// Iteration budget exhausted while still making progress.
    MaxIters,
    /// The very first line search failed to find any decrease.
    NoDescent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub converged: bool,
    /// Accepted cost after each iteration, starting with the initial cost.
    /// Non-increasing by construction.
    pub trace: Vec<f64>,
    pub n_value_evals: u64,
    pub n_grad_evals: u64,
}

/// Minimize `obj` over the box starting from `x0` (projected first).
///
/// Each iteration takes a projected gradient step `P(x - s g)` with `s`
/// found by backtracking under the directional Armijo test; the step
/// doubles after every accepted iteration (capped at 1) so the search
/// recovers quickly from an overly cautious start.
pub fn solve(
    obj: &mut dyn Objective,
    x0: &[f64],
    bounds: &BoxBounds,
    cfg: &SolveConfig,
) -> Result<SolveResult, OptimError> {
    let mut x = project_box(x0, bounds);
    let mut n_value_evals: u64 = 0;
    let mut n_grad_evals: u64 = 0;

    let (mut f, mut g) = obj.eval_grad(&x)?;
    n_grad_evals += 1;
    let mut trace = vec![f];
    let mut step = cfg.step0;
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;

    'outer: for iter in 1..=cfg.max_iters {
        iterations = iter;
        let mut s = step;
        let mut accepted: Option<(Vec<f64>, f64, f64)> = None;

        for _ in 0..=cfg.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(&xi, &gi)| xi - s * gi).collect();
            let xn = project_box(&trial, bounds);
            let gdx: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(&gi, (&ni, &oi))| gi * (ni - oi)).sum();
            let moved = xn.iter().zip(&x).any(|(&a, &b)| a != b);
            if !moved {
                // Projected gradient step is identically zero: stationary.
                status = SolveStatus::Converged;
                iterations = iter - 1;
                break 'outer;
            }
            let fn_ = obj.eval(&xn);
            n_value_evals += 1;
            if fn_.is_finite() && fn_ <= f + cfg.armijo_c * gdx {
                accepted = Some((xn, fn_, s));
                break;
            }
            s *= cfg.shrink;
        }

        let Some((xn, fn_, s_used)) = accepted else {
            // No decrease at any step length.
            status = if iter == 1 { SolveStatus::NoDescent } else { SolveStatus::Converged };
            iterations = iter - 1;
            break;
        };

        let decrease = f - fn_;
        x = xn;
        f = fn_;
        trace.push(f);
        step = (s_used * 2.0).min(1.0);

        let (f_chk, g_new) = obj.eval_grad(&x)?;
        n_grad_evals += 1;
        debug_assert!((f_chk - f).abs() <= 1e-9 * (1.0 + f.abs()));
        g = g_new;

        let pg_inf = x
            .iter()
            .zip(g.iter().zip(bounds.lo.iter().zip(&bounds.hi)))
            .map(|(&xi, (&gi, (&lo, &hi)))| (xi - (xi - gi).clamp(lo, hi)).abs())
            .fold(0.0f64, f64::max);
        if pg_inf <= cfg.tol_grad || decrease <= cfg.tol_cost * (1.0 + f.abs()) {
            status = SolveStatus::Converged;
            break;
        }
    }

    let converged = status == SolveStatus::Converged;
    Ok(SolveResult { x, cost: f, iterations, status, converged, trace, n_value_evals, n_grad_evals })
}
