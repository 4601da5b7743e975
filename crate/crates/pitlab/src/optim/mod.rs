//! Differentiable rollout machinery: a reverse-mode tape over a fixed
//! primitive set, a projected-gradient solver with Armijo backtracking, a
//! finite-difference checker, and a small Adam optimizer for network
//! training.
//!
//! The tape's primitive set is closed over every model in the repository —
//! arithmetic, trig, `tanh`, `atan2`, square root, softplus, rectification,
//! and an affine (dense-row) node that makes network layers cheap — so there
//! is no general expression compiler, just graphs built directly by the
//! model code.

mod adam;
mod solve;
mod tape;

pub use adam::Adam;
pub use solve::{
    finite_diff_gradient, project_box, smooth_hinge, solve, BoxBounds, Objective, SolveConfig, SolveResult,
    SolveStatus,
};
pub use tape::{CompiledProblem, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered during {context}")]
    NonFiniteValue { context: &'static str },
}

/// A flat decision vector with named blocks, used by the trajectory
/// optimizers to keep slicing readable.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVector {
    pub values: Vec<f64>,
    pub blocks: Vec<(String, usize, usize)>,
}

impl DecisionVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, blocks: Vec::new() }
    }

    pub fn with_blocks(values: Vec<f64>, blocks: Vec<(String, usize, usize)>) -> Self {
        Self { values, blocks }
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.blocks
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|&(_, start, len)| &self.values[start..start + len])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Evaluate a compiled rollout problem at `dec`, returning the cost and its
/// gradient. This is the single entry point the planner and controller use;
/// its output is what the finite-difference acceptance checks compare
/// against.
pub fn rollout_value_and_grad(prog: &mut CompiledProblem, dec: &[f64]) -> Result<(f64, Vec<f64>), OptimError> {
    prog.eval_grad(dec)
}

/// Conversion rate of the deterministic runtime model: reported planner and
/// controller timings are `flops / MODELED_FLOPS_PER_MS`, a fixed nominal
/// throughput rather than a wall clock. This keeps every reported timing a
/// pure function of the work performed, so benchmark reports are
/// byte-identical across machines, schedulers, and parallelism degrees.
pub const MODELED_FLOPS_PER_MS: f64 = 1.0e6;

/// Modeled milliseconds for a given flop count.
pub fn modeled_ms(flops: f64) -> f64 {
    flops / MODELED_FLOPS_PER_MS
}
