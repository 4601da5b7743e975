//! Tracking controller and closed-loop executive.
//!
//! The controller consumes a [`DecisionPackage`](crate::planner::DecisionPackage)
//! and drives the bullet through three phases: *Chasing* (close on the strike
//! pose, replanning allowed), *Pit* (execute the committed force corridor
//! through the contact window, no replanning), and *Stabilization* (disengage
//! and settle). Within each phase a short-horizon model-predictive tracker
//! plans steering and drive torque on the reverse-mode tape; during the
//! contact window the tracker's model couples the bullet's chassis to the
//! target through the learned contact surrogate, with per-step contact forces
//! as extra decision variables boxed by the committed corridor.

mod exec;
mod mpc;
mod reference;

pub use exec::{
    closed_loop, initial_world, static_package, ControlModels, ExecConfig, PackageLog, RunRecord,
    RUN_SCHEMA_VERSION,
};
pub use mpc::{smooth_bullet_step, MpcConfig, MpcProblem, MpcSolution, PinnedState};
pub use reference::{generate_reference, retreat_reference, ReferencePlan};

use serde::{Deserialize, Serialize};

use crate::dynamics::{BulletState, TargetState};
use crate::math::wrap_to_pi;

/// Bullet state relative to the target: world-frame position offset, wrapped
/// heading difference, and speed difference (bullet minus target throughout).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeState {
    pub dx: f64,
    pub dy: f64,
    pub dpsi: f64,
    pub dv: f64,
}

impl RelativeState {
    /// Express the position offset in the target's body frame:
    /// `[ahead, left, heading diff, speed diff]`, the coordinates the
    /// approach envelope is written in.
    pub fn in_target_frame(&self, psi_t: f64) -> [f64; 4] {
        let (s, c) = psi_t.sin_cos();
        [c * self.dx + s * self.dy, -s * self.dx + c * self.dy, self.dpsi, self.dv]
    }
}

/// Relative state of the bullet with respect to the target.
pub fn relative_state(target: &TargetState, bullet: &BulletState) -> RelativeState {
    RelativeState {
        dx: bullet.x - target.x,
        dy: bullet.y - target.y,
        dpsi: wrap_to_pi(bullet.psi - target.psi),
        dv: bullet.vx.hypot(bullet.vy) - target.vx.hypot(target.vy),
    }
}

/// Executive phase of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Closing on the strike pose; replanning allowed.
    Chasing,
    /// Inside the committed contact window; the package is locked.
    Pit,
    /// Post-window disengagement and settling.
    Stabilization,
}

/// Which control stack runs the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerVariant {
    /// Full stack: replanning decision layer on top of the tracking MPC.
    Hierarchical,
    /// Ablation: one static package fixed at t = 0 from scenario geometry,
    /// then the same tracking MPC with no replanning.
    MpcOnly,
}

impl ControllerVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerVariant::Hierarchical => "hierarchical",
            ControllerVariant::MpcOnly => "mpc_only",
        }
    }
}
