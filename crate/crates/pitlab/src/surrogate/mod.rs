//! Compact one-step surrogate of the target vehicle's contact response.
//!
//! The pipeline has four stages, each a CLI command:
//!
//! 1. **Teacher training** — a dense tanh MLP is trained on oracle
//!    transitions with a data loss plus a physics residual penalizing
//!    violation of the planar rigid-body + roll equations.
//! 2. **Distillation** — a student (same architecture) imitates the teacher
//!    under a within-pool weight-dispersion penalty that herds weights into
//!    clusterable groups.
//! 3. **Clustering** — per-pool complete-linkage agglomeration of scalar
//!    weights produces a relation matrix `R`: a one-hot assignment of every
//!    dense parameter to a free parameter, so the effective weights are
//!    `w_hat = R theta`.
//! 4. **Fine-tuning** — only `theta` is trained further, with gradients
//!    pulled back through `R` (a scatter-add).
//!
//! The result predicts the next target state from the previous state and a
//! two-sample force history, in a pose-canonicalized frame, with exact
//! kinematic advance of position and heading so the network only learns
//! dynamic residuals.

mod cluster;
mod data;
mod model_io;
mod net;
mod norm;
mod physics;
mod predict;
mod train;

pub use cluster::{
    cluster_parameters, default_cluster_targets, init_theta, param_report, pool_layout, pullback,
    reconstruct, ParamReport, Pool,
};
pub use data::{generate_dataset, DataGenConfig};
pub use model_io::{
    load_dense_model, load_pico_model, read_dataset, save_dense_model, save_pico_model,
    write_dataset, DenseModelFile, ModelMeta, PicoModelFile,
};
pub use net::{solve_hidden_dims, Activations, DenseNet, MLPSpec};
pub use norm::{Normalization, FORCE_SCALE};
pub use physics::{physics_residual, physics_residual_with, sample_wrench, PhysicsWeights};
pub use predict::{
    canonical_state, features, predict_step, predict_step_side, rollout_states, target_increments,
    Predictor,
};
pub use train::{
    distill, dispersion_penalty, finetune, train_teacher, training_loss, training_loss_and_grad,
    TrainConfig, TrainReport,
};

use crate::dynamics::TargetState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cluster target {target} exceeds pool size {size} (pool {pool})")]
    InvalidTarget { pool: usize, target: usize, size: usize },
    #[error("non-finite loss at {context}")]
    NonFiniteLoss { context: String },
    #[error("dataset too small: {got} samples, need at least {need}")]
    DatasetTooSmall { got: usize, need: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One-hot assignment of every dense parameter to a free parameter; the
/// effective weight vector is `w_hat[i] = theta[assignments[i]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationMatrix {
    pub assignments: Vec<u32>,
    pub n_free: usize,
}

impl RelationMatrix {
    /// Identity relation: every parameter is its own cluster.
    pub fn identity(n: usize) -> Self {
        Self { assignments: (0..n as u32).collect(), n_free: n }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        let mut seen = vec![false; self.n_free];
        for &a in &self.assignments {
            if (a as usize) >= self.n_free {
                return Err(SurrogateError::DimensionMismatch {
                    expected: self.n_free,
                    got: a as usize,
                });
            }
            seen[a as usize] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(SurrogateError::DimensionMismatch { expected: self.n_free, got: 0 });
        }
        Ok(())
    }
}

/// The trainable vector of the compressed network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeParams {
    pub theta: Vec<f64>,
}

/// Compressed network: architecture + relation matrix + free parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicoNet {
    pub spec: MLPSpec,
    pub relation: RelationMatrix,
    pub theta: FreeParams,
}

impl PicoNet {
    /// Materialize the dense network with reconstructed weights.
    pub fn to_dense(&self) -> DenseNet {
        let weights =
            reconstruct(&self.relation, &self.theta).expect("relation/theta lengths consistent");
        DenseNet { spec: self.spec.clone(), weights }
    }
}

/// One recorded oracle transition on the 0.05 s control grid. Force entries
/// are interval means in the contacted panel's frame, index 0 holding the
/// step being predicted and index 1 the step before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub x_prev: TargetState,
    pub fn_hist: [f64; 2],
    pub ft_hist: [f64; 2],
    pub x_next: TargetState,
    pub dt: f64,
    pub mu: f64,
}
