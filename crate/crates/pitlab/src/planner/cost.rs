//! Candidate scoring: terminal rollout cost plus plan-preference terms.
//!
//! The terminal cost asks "did the virtual rollout end reversed, slow, and
//! with forces inside the admissible corridor"; the preference terms ask for
//! sooner/shorter contact and comfortable clearance along the way. The same
//! formulas are mirrored node-for-node on the optimization tape in
//! `rollout.rs`, so everything here is written against the smooth closed
//! forms (regularized absolute values) rather than exact point geometry.

use crate::dynamics::{ContactForce, TargetState};
use crate::math::wrap_to_pi;
use crate::scenario::RoadSpec;

use super::{ForceCorridor, PredictedDisc, PulseTemplate};

/// Weight on `(onset + duration)`: all else equal, strike sooner and shorter.
pub const TIME_PREFERENCE_WEIGHT: f64 = 0.05;
/// Weight on the squared clearance deficit integrated over the rollout.
pub const CLEARANCE_WEIGHT: f64 = 0.5;
/// Clearance below which the preference penalty starts to bite (meters).
pub const CLEARANCE_COMFORT_M: f64 = 1.0;
/// Regularizer inside smoothed absolute values / distances (meters squared).
const SMOOTH_EPS: f64 = 1e-9;

/// Weights and anchor of the terminal rollout cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalObjective {
    /// Reversed heading the rollout should reach.
    pub psi_rev: f64,
    pub w_psi: f64,
    pub w_v: f64,
    pub w_c: f64,
}

/// Terminal rollout cost: squared wrapped heading miss, terminal kinetic
/// proxy, and squared corridor deviation summed over the force schedule.
pub fn target_cost_jt(
    traj: &[TargetState],
    forces: &[ContactForce],
    corridor: &ForceCorridor,
    obj: &TerminalObjective,
) -> f64 {
    let last = traj.last().expect("rollout trajectory must be non-empty");
    let e_psi = wrap_to_pi(last.psi - obj.psi_rev);
    let mut cost = obj.w_psi * e_psi * e_psi + obj.w_v * (last.vx * last.vx + last.vy * last.vy);
    for (k, f) in forces.iter().enumerate() {
        let d = corridor.box_at(k).dist(f);
        cost += obj.w_c * d * d;
    }
    cost
}

/// Signed lateral offset from the road centerline, in the same closed form
/// used on the tape (positive toward the road's left).
pub fn road_lateral(road: &RoadSpec, p: [f64; 2]) -> f64 {
    let kappa = road.topology.curvature();
    if kappa == 0.0 {
        return p[1];
    }
    let r = 1.0 / kappa;
    let dx = p[0];
    let dy = p[1] - r;
    kappa.signum() * (r.abs() - (dx * dx + dy * dy + SMOOTH_EPS).sqrt())
}

/// Conservative clearance of a vehicle centered at `p`: distance from the
/// circumscribed disc to the nearest road boundary or predicted obstacle at
/// rollout time `tau`.
pub fn disc_clearance(road: &RoadSpec, discs: &[PredictedDisc], p: [f64; 2], tau: f64, circumradius: f64) -> f64 {
    let lat = road_lateral(road, p);
    let lat_abs = (lat * lat + SMOOTH_EPS).sqrt();
    let mut margin = road.half_width - lat_abs - circumradius;
    for d in discs {
        let c = d.at(tau);
        let dx = p[0] - c[0];
        let dy = p[1] - c[1];
        let gap = (dx * dx + dy * dy + SMOOTH_EPS).sqrt() - d.radius - circumradius;
        margin = margin.min(gap);
    }
    margin
}

/// Plan preference: strike sooner and shorter, and keep the spun target
/// comfortably clear of boundaries and obstacles throughout the rollout.
pub fn plan_preference_cost(
    traj: &[TargetState],
    pulse: &PulseTemplate,
    road: &RoadSpec,
    discs: &[PredictedDisc],
    circumradius: f64,
    dt: f64,
) -> f64 {
    let mut clearance_pen = 0.0;
    for (k, x) in traj.iter().enumerate() {
        let tau = k as f64 * dt;
        let margin = disc_clearance(road, discs, [x.x, x.y], tau, circumradius);
        let deficit = (CLEARANCE_COMFORT_M - margin).max(0.0);
        clearance_pen += deficit * deficit * dt;
    }
    TIME_PREFERENCE_WEIGHT * (pulse.onset + pulse.duration) + CLEARANCE_WEIGHT * clearance_pen
}

/// Full candidate score: preference terms plus the weighted terminal cost.
#[allow(clippy::too_many_arguments)]
pub fn score_candidate(
    traj: &[TargetState],
    forces: &[ContactForce],
    pulse: &PulseTemplate,
    corridor: &ForceCorridor,
    obj: &TerminalObjective,
    road: &RoadSpec,
    discs: &[PredictedDisc],
    circumradius: f64,
    dt: f64,
    lambda_t: f64,
) -> f64 {
    plan_preference_cost(traj, pulse, road, discs, circumradius, dt)
        + lambda_t * target_cost_jt(traj, forces, corridor, obj)
}
