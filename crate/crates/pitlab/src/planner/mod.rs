//! Upper-layer maneuver planner.
//!
//! Every second the planner re-decides *whether and how* to perform the pit
//! contact: it enumerates candidate half-sine contact pulses on a coarse grid,
//! rolls each through the fast surrogate to see where the target ends up,
//! filters the candidates through feasibility checks (can the bullet reach the
//! strike pose in time, does the spun target stay on the road and clear of
//! obstacles, does it end up reversed), locally refines the best pulse with
//! first-order on-tape optimization, and packages the result as a
//! [`DecisionPackage`]: the contract the lower-layer controller executes.

mod cost;
mod plan;
mod rollout;

pub use cost::{score_candidate, target_cost_jt, TerminalObjective, CLEARANCE_COMFORT_M, CLEARANCE_WEIGHT, TIME_PREFERENCE_WEIGHT};
pub use plan::{check_feasibility, plan, Feasibility, FeasibilityCause};
pub use rollout::virtual_rollout;

pub(crate) use plan::predict_target_pose;
pub(crate) use rollout::{add_c, tape_pico_step, TapeState};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ContactForce, TargetState, VehiclePreset, CONTROL_DT};
use crate::math::wrap_to_pi;
use crate::scenario::{ObstacleSpec, RoadSpec, ScenarioSpec};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("surrogate failure during virtual rollout: {0}")]
    Surrogate(#[from] crate::surrogate::SurrogateError),
    #[error("refinement solver failure: {0}")]
    Optim(#[from] crate::optim::OptimError),
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
}

/// Which rear-quarter panel the maneuver strikes, or the decision to abstain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PitMode {
    PitLeft,
    PitRight,
    Abort,
}

impl PitMode {
    /// Panel sign convention: +1 for the target's left panel, -1 for the
    /// right, 0 for abort.
    pub fn side(self) -> f64 {
        match self {
            PitMode::PitLeft => 1.0,
            PitMode::PitRight => -1.0,
            PitMode::Abort => 0.0,
        }
    }
}

/// Constant-velocity obstacle prediction used inside a decision package.
/// Times are measured from the instant the package was issued.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedDisc {
    pub center: [f64; 2],
    pub velocity: [f64; 2],
    pub radius: f64,
}

impl PredictedDisc {
    pub fn at(&self, tau: f64) -> [f64; 2] {
        [self.center[0] + self.velocity[0] * tau, self.center[1] + self.velocity[1] * tau]
    }
}

/// Axis-aligned box of admissible contact forces for one control interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceBox {
    pub fn_min: f64,
    pub fn_max: f64,
    pub ft_min: f64,
    pub ft_max: f64,
}

impl ForceBox {
    pub const ZERO: ForceBox = ForceBox { fn_min: 0.0, fn_max: 0.0, ft_min: 0.0, ft_max: 0.0 };

    pub fn is_zero(&self) -> bool {
        self.fn_min == 0.0 && self.fn_max == 0.0 && self.ft_min == 0.0 && self.ft_max == 0.0
    }

    pub fn contains(&self, f: &ContactForce) -> bool {
        f.normal >= self.fn_min && f.normal <= self.fn_max && f.tangential >= self.ft_min && f.tangential <= self.ft_max
    }

    /// Euclidean distance from a force to the box (0 inside).
    pub fn dist(&self, f: &ContactForce) -> f64 {
        let dn = (self.fn_min - f.normal).max(0.0) + (f.normal - self.fn_max).max(0.0);
        let dt = (self.ft_min - f.tangential).max(0.0) + (f.tangential - self.ft_max).max(0.0);
        (dn * dn + dt * dt).sqrt()
    }

    pub fn clamp(&self, f: &ContactForce) -> ContactForce {
        ContactForce {
            normal: f.normal.clamp(self.fn_min, self.fn_max),
            tangential: f.tangential.clamp(self.ft_min, self.ft_max),
        }
    }

    /// Box midpoint as a force.
    pub fn center(&self) -> ContactForce {
        ContactForce {
            normal: 0.5 * (self.fn_min + self.fn_max),
            tangential: 0.5 * (self.ft_min + self.ft_max),
        }
    }
}

/// Time-indexed sequence of per-interval force boxes starting at the instant
/// the decision package was issued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceCorridor {
    pub dt: f64,
    pub boxes: Vec<ForceBox>,
}

impl ForceCorridor {
    /// Box governing the interval `[k dt, (k+1) dt)`; zero outside the
    /// corridor's extent.
    pub fn box_at(&self, k: usize) -> ForceBox {
        self.boxes.get(k).copied().unwrap_or(ForceBox::ZERO)
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.boxes.len() as f64
    }
}

/// Where the target should end up for the maneuver to count as done:
/// station/lateral band on the road, reversed heading cone, and a speed cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalSet {
    pub station_range: [f64; 2],
    pub lateral_range: [f64; 2],
    pub heading_center: f64,
    pub heading_halfwidth: f64,
    pub speed_cap: f64,
}

impl TerminalSet {
    pub fn contains(&self, road: &RoadSpec, x: &TargetState) -> bool {
        let (s, lat) = road.station_of([x.x, x.y]);
        let heading_ok = wrap_to_pi(x.psi - self.heading_center).abs() <= self.heading_halfwidth;
        let speed = x.vx.hypot(x.vy);
        s >= self.station_range[0]
            && s <= self.station_range[1]
            && lat >= self.lateral_range[0]
            && lat <= self.lateral_range[1]
            && heading_ok
            && speed <= self.speed_cap
    }
}

/// Box of admissible bullet-relative-to-target states during the approach,
/// expressed in the target's body frame: `[ahead, left, heading diff, speed
/// diff]`. The heading interval's midpoint doubles as the planned contact
/// angle that the reference generator aims for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulletEnvelope {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl BulletEnvelope {
    /// Default approach envelope scaled by the bullet's length: from well
    /// behind to slight overlap, a broad lateral band, a heading cone around
    /// the planned contact angle, and a closing-speed band.
    pub fn standard(bullet_length: f64, heading_center: f64) -> Self {
        let l = bullet_length;
        Self {
            lo: [-8.0 * l, -1.6 * l, heading_center - 0.35, -4.0],
            hi: [0.7 * l, 1.6 * l, heading_center + 0.35, 9.0],
        }
    }

    pub fn heading_center(&self) -> f64 {
        0.5 * (self.lo[2] + self.hi[2])
    }

    /// Membership test on target-frame relative coordinates; the heading
    /// component is compared after wrapping around the cone's center.
    pub fn contains(&self, e: &[f64; 4]) -> bool {
        let c = self.heading_center();
        let half = 0.5 * (self.hi[2] - self.lo[2]);
        e[0] >= self.lo[0]
            && e[0] <= self.hi[0]
            && e[1] >= self.lo[1]
            && e[1] <= self.hi[1]
            && wrap_to_pi(e[2] - c).abs() <= half
            && e[3] >= self.lo[3]
            && e[3] <= self.hi[3]
    }
}

/// Post-contact safety limits the stabilization phase must respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostSafety {
    pub d_safe: f64,
    pub max_yaw_rate: f64,
}

/// The planner's full hand-off to the tracking controller. All times inside
/// the package (contact window, obstacle predictions) are measured from the
/// instant the package was issued; the controller keeps track of that instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPackage {
    pub mode: PitMode,
    pub road: RoadSpec,
    pub obstacles: Vec<PredictedDisc>,
    pub terminal_set: TerminalSet,
    pub force_corridor: ForceCorridor,
    pub bullet_envelope: BulletEnvelope,
    /// `[t_on, t_off]` relative to package issue.
    pub contact_window: [f64; 2],
    pub post_safety: PostSafety,
}

impl DecisionPackage {
    /// Whether control interval `k` (of width `dt`, midpoint convention)
    /// falls inside the contact window.
    pub fn step_in_window(&self, k: usize, dt: f64) -> bool {
        let mid = (k as f64 + 0.5) * dt;
        mid >= self.contact_window[0] && mid < self.contact_window[1]
    }

    /// Structural invariants. Abort packages are exempt from the window and
    /// corridor checks (they carry an empty commitment by construction).
    pub fn validate(&self) -> Result<(), PlannerError> {
        let err = |m: String| Err(PlannerError::InvalidConfig(m));
        self.road.validate().map_err(|e| PlannerError::InvalidConfig(e))?;
        if !(self.post_safety.d_safe >= 0.0 && self.post_safety.max_yaw_rate > 0.0) {
            return err("post-safety limits must be non-negative".into());
        }
        if self.mode == PitMode::Abort {
            return Ok(());
        }
        let [w0, w1] = self.contact_window;
        if !(w0 >= 0.0 && w1 > w0 && w1 <= self.force_corridor.horizon() + 1e-9) {
            return err(format!("contact window [{w0}, {w1}] outside corridor horizon"));
        }
        for (k, b) in self.force_corridor.boxes.iter().enumerate() {
            if !(b.fn_min <= b.fn_max && b.ft_min <= b.ft_max) || b.fn_min < 0.0 {
                return err(format!("malformed force box at step {k}"));
            }
            if !self.step_in_window(k, self.force_corridor.dt) && !b.is_zero() {
                return err(format!("nonzero force box at step {k} outside the contact window"));
            }
        }
        if self.terminal_set.heading_halfwidth <= 0.0 || self.terminal_set.speed_cap <= 0.0 {
            return err("terminal set must have positive heading width and speed cap".into());
        }
        for d in 0..4 {
            if self.bullet_envelope.lo[d] > self.bullet_envelope.hi[d] {
                return err(format!("bullet envelope inverted in dimension {d}"));
            }
        }
        Ok(())
    }
}

/// Half-sine contact-force pulse: `normal(tau) = A sin(pi (tau - onset) /
/// duration)` on its support, zero elsewhere, with a fixed
/// tangential-to-normal ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTemplate {
    pub amplitude: f64,
    pub duration: f64,
    pub onset: f64,
    pub tangential_ratio: f64,
}

impl PulseTemplate {
    pub fn force_at(&self, tau: f64) -> ContactForce {
        let s = (tau - self.onset) / self.duration;
        if !(0.0..=1.0).contains(&s) {
            return ContactForce::default();
        }
        let fnl = self.amplitude * (std::f64::consts::PI * s).sin();
        ContactForce { normal: fnl, tangential: self.tangential_ratio * fnl }
    }

    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// A pulse sampled onto the control grid: per-interval forces taken at the
/// interval midpoints, the discrete schedule fed to the virtual rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualInteraction {
    pub pulse: PulseTemplate,
    pub dt: f64,
    pub forces: Vec<ContactForce>,
}

impl VirtualInteraction {
    pub fn from_pulse(pulse: PulseTemplate, n_steps: usize, dt: f64) -> Self {
        let forces = (0..n_steps).map(|k| pulse.force_at((k as f64 + 0.5) * dt)).collect();
        Self { pulse, dt, forces }
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.pulse.amplitude >= 0.0 && self.pulse.duration > 0.0 && self.pulse.onset >= 0.0) {
            return Err(PlannerError::InvalidConfig("pulse must have non-negative amplitude/onset and positive duration".into()));
        }
        if self.forces.iter().any(|f| !f.normal.is_finite() || !f.tangential.is_finite() || f.normal < 0.0) {
            return Err(PlannerError::InvalidConfig("sampled pulse forces must be finite with non-negative normal".into()));
        }
        Ok(())
    }
}

/// Planner tuning knobs. The acceleration grid is expressed as peak specific
/// force on the target (m/s^2) so the same grid suits both vehicle presets;
/// it is multiplied by the target mass when a pulse is instantiated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Virtual rollout horizon in seconds.
    pub horizon: f64,
    /// Seconds between replans.
    pub replan_period: f64,
    pub onset_grid: Vec<f64>,
    pub accel_grid: Vec<f64>,
    pub duration_grid: Vec<f64>,
    pub ratio_grid: Vec<f64>,
    pub w_psi: f64,
    pub w_v: f64,
    pub w_c: f64,
    /// Weight of the terminal-rollout cost against the plan preference terms.
    pub lambda_t: f64,
    /// Projected-gradient iterations for pulse refinement (0 disables).
    pub refine_iters: usize,
    pub eps_psi: f64,
    pub terminal_speed_cap: f64,
    pub d_safe: f64,
    pub max_post_yaw_rate: f64,
    /// Planned approach heading offset between bullet and target at contact.
    pub contact_angle: f64,
    /// Upper bound on peak specific contact force (m/s^2).
    pub max_contact_accel: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 2.0,
            replan_period: 1.0,
            onset_grid: vec![0.2, 0.4, 0.6, 0.8],
            accel_grid: vec![8.0, 11.0, 14.0, 16.0],
            duration_grid: vec![0.3, 0.5, 0.7],
            ratio_grid: vec![0.0, 0.35],
            w_psi: 1.0,
            w_v: 0.02,
            w_c: 2e-8,
            lambda_t: 1.0,
            refine_iters: 12,
            eps_psi: 0.5,
            terminal_speed_cap: 12.0,
            d_safe: 0.5,
            max_post_yaw_rate: 2.5,
            contact_angle: 0.37,
            max_contact_accel: 18.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let err = |m: &str| Err(PlannerError::InvalidConfig(m.into()));
        if !(self.horizon > 0.0 && self.replan_period > 0.0) {
            return err("horizon and replan period must be positive");
        }
        if self.onset_grid.is_empty() || self.accel_grid.is_empty() || self.duration_grid.is_empty() || self.ratio_grid.is_empty() {
            return err("candidate grids must be non-empty");
        }
        if self.onset_grid.iter().any(|&t| t < 0.0 || t >= self.horizon) {
            return err("onsets must lie inside the horizon");
        }
        if self.accel_grid.iter().any(|&a| a <= 0.0 || a > self.max_contact_accel) {
            return err("accelerations must be positive and below the contact cap");
        }
        if self.duration_grid.iter().any(|&d| d <= 0.0) {
            return err("durations must be positive");
        }
        if self.ratio_grid.iter().any(|&r| r.abs() > 0.6) {
            return err("tangential ratios must stay below the friction cone");
        }
        if !(self.eps_psi > 0.0 && self.terminal_speed_cap > 0.0 && self.d_safe >= 0.0 && self.max_post_yaw_rate > 0.0) {
            return err("tolerances must be positive");
        }
        Ok(())
    }

    /// Number of virtual rollout steps over the horizon.
    pub fn n_steps(&self) -> usize {
        (self.horizon / CONTROL_DT).round() as usize
    }
}

/// Per-plan bookkeeping: how many candidates were tried and why the rest
/// fell out, plus the modeled planning runtime.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    pub candidates_evaluated: usize,
    pub infeasible_chasing: usize,
    pub infeasible_boundary: usize,
    pub infeasible_obstacle: usize,
    pub infeasible_terminal: usize,
    pub rollout_failures: usize,
    pub chosen_cost: Option<f64>,
    pub runtime_ms: f64,
}

/// Static context the planner needs about the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanEnv {
    pub road: RoadSpec,
    pub obstacles: Vec<ObstacleSpec>,
    pub mu: f64,
    pub preset: VehiclePreset,
}

impl PlanEnv {
    pub fn from_scenario(spec: &ScenarioSpec) -> Self {
        Self {
            road: spec.road.clone(),
            obstacles: spec.obstacles.clone(),
            mu: spec.mu,
            preset: VehiclePreset::by_id(spec.preset),
        }
    }
}

/// Whether the wall-clock instant `t` is a replan tick for the given period.
/// Both are snapped to the control grid so accumulated floating-point drift
/// in `t` cannot shift the schedule.
pub fn replan_schedule(t: f64, period: f64) -> bool {
    let step = (t / CONTROL_DT).round() as i64;
    let period_steps = (period / CONTROL_DT).round().max(1.0) as i64;
    step % period_steps == 0
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::surrogate::{DenseNet, MLPSpec, Normalization};

    /// Tiny linear surrogate with hand-set physics-shaped weights: normal
    /// force spins the car up while bleeding its forward speed hard, so the
    /// model rotates roughly in place instead of carrying lane speed through
    /// the spin (a linear map cannot represent the exact body-frame velocity
    /// rotation, so the bleed stands in for it). Under a 24 kN, 0.5 s
    /// half-sine a full-size target reverses within two seconds while its
    /// body corners stay inside a 5.25 m half-width road, which makes it a
    /// fast stand-in for the trained surrogate in planner and controller
    /// tests.
    pub(crate) fn toy_spin_net() -> (DenseNet, Normalization) {
        let spec = MLPSpec::new(12, vec![], 8);
        let mut net = DenseNet::zeros(spec);
        // Row r, column c of the single 8x12 weight matrix.
        let mut set = |r: usize, c: usize, v: f64| net.weights[r * 12 + c] = v;
        // d(vx) ~ -0.5 * fn / 1e4 : strong speed bleed while in contact.
        set(0, 8, -0.5);
        // d(vy): pushed off the panel plus damping.
        set(1, 8, -0.06);
        set(1, 1, -0.05);
        // d(psi_dot): spin-up from the normal force plus damping.
        set(3, 8, 0.22);
        set(3, 3, -0.03);
        (net, Normalization::identity())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn replan_ticks_follow_the_one_second_grid() {
        assert!(replan_schedule(0.0, 1.0));
        assert!(!replan_schedule(0.05, 1.0));
        assert!(!replan_schedule(0.95, 1.0));
        assert!(replan_schedule(1.0, 1.0));
        assert!(replan_schedule(2.0, 1.0));
        // Accumulated drift: 0.05 summed 20 times is not exactly 1.0.
        let mut t = 0.0;
        for _ in 0..20 {
            t += 0.05;
        }
        assert!(replan_schedule(t, 1.0));
    }

    #[test]
    fn pulse_is_half_sine_on_its_support() {
        let p = PulseTemplate { amplitude: 2.0e4, duration: 0.5, onset: 0.4, tangential_ratio: 0.35 };
        assert_eq!(p.force_at(0.39).normal, 0.0);
        assert_eq!(p.force_at(0.91).normal, 0.0);
        // Peak at the middle of the support.
        let mid = p.force_at(0.65);
        assert_abs_diff_eq!(mid.normal, 2.0e4, epsilon = 1e-9);
        assert_abs_diff_eq!(mid.tangential, 0.35 * 2.0e4, epsilon = 1e-9);
        // Quarter point: sin(pi/4).
        let q = p.force_at(0.525);
        assert_abs_diff_eq!(q.normal, 2.0e4 * (std::f64::consts::PI / 4.0).sin(), epsilon = 1e-9);
    }

    #[test]
    fn interaction_samples_midpoints() {
        let p = PulseTemplate { amplitude: 1.0e4, duration: 0.5, onset: 0.2, tangential_ratio: 0.0 };
        let vi = VirtualInteraction::from_pulse(p, 40, 0.05);
        assert_eq!(vi.forces.len(), 40);
        // Interval 4 covers [0.2, 0.25): midpoint 0.225 -> s = 0.05.
        assert_abs_diff_eq!(vi.forces[4].normal, 1.0e4 * (std::f64::consts::PI * 0.05).sin(), epsilon = 1e-9);
        // Interval 3 midpoint 0.175 is before onset.
        assert_eq!(vi.forces[3].normal, 0.0);
        // Interval 14 midpoint 0.725 is past the support [0.2, 0.7].
        assert_eq!(vi.forces[14].normal, 0.0);
        assert!(vi.validate().is_ok());
    }

    #[test]
    fn force_box_distance_hand_cases() {
        let b = ForceBox { fn_min: 1.0e4, fn_max: 2.0e4, ft_min: -3.0e3, ft_max: 3.0e3 };
        // Inside: zero.
        assert_eq!(b.dist(&ContactForce { normal: 1.5e4, tangential: 0.0 }), 0.0);
        // Below in normal only.
        assert_abs_diff_eq!(b.dist(&ContactForce { normal: 0.8e4, tangential: 0.0 }), 2.0e3, epsilon = 1e-9);
        // Corner: both out; Euclidean combination.
        let d = b.dist(&ContactForce { normal: 2.5e4, tangential: 4.0e3 });
        assert_abs_diff_eq!(d, ((5.0e3f64).powi(2) + (1.0e3f64).powi(2)).sqrt(), epsilon = 1e-9);
        // Clamp projects to the nearest point.
        let c = b.clamp(&ContactForce { normal: 2.5e4, tangential: 4.0e3 });
        assert_eq!(c.normal, 2.0e4);
        assert_eq!(c.tangential, 3.0e3);
    }

    #[test]
    fn envelope_wraps_heading_membership() {
        let e = BulletEnvelope::standard(5.0, 3.0);
        // Heading near -pi is still inside a cone centered at 3.0 once wrapped.
        let inside = [-10.0, 1.0, 3.0 + 0.3, 2.0];
        let wrapped = [-10.0, 1.0, 3.0 + 0.3 - 2.0 * std::f64::consts::PI, 2.0];
        assert!(e.contains(&inside));
        assert!(e.contains(&wrapped));
        assert!(!e.contains(&[-10.0, 1.0, 3.0 + 0.4, 2.0]));
        assert_abs_diff_eq!(e.heading_center(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn package_validation_catches_forces_outside_window() {
        let road = RoadSpec {
            topology: crate::scenario::RoadTopology::StraightUrban,
            lane_count: 2,
            lane_width: 3.5,
            half_width: 5.0,
            length: 200.0,
        };
        let mut boxes = vec![ForceBox::ZERO; 40];
        boxes[10] = ForceBox { fn_min: 0.0, fn_max: 1.0e4, ft_min: 0.0, ft_max: 0.0 };
        let pkg = DecisionPackage {
            mode: PitMode::PitLeft,
            road,
            obstacles: vec![],
            terminal_set: TerminalSet {
                station_range: [0.0, 200.0],
                lateral_range: [-4.5, 4.5],
                heading_center: std::f64::consts::PI,
                heading_halfwidth: 0.5,
                speed_cap: 12.0,
            },
            force_corridor: ForceCorridor { dt: 0.05, boxes },
            bullet_envelope: BulletEnvelope::standard(5.0, -0.37),
            contact_window: [0.4, 0.9],
            post_safety: PostSafety { d_safe: 0.5, max_yaw_rate: 2.5 },
        };
        // Step 10 has midpoint 0.525, inside [0.4, 0.9): valid.
        assert!(pkg.validate().is_ok());
        // Move the nonzero box outside the window: invalid.
        let mut bad = pkg.clone();
        bad.force_corridor.boxes[10] = ForceBox::ZERO;
        bad.force_corridor.boxes[30] = ForceBox { fn_min: 0.0, fn_max: 1.0e4, ft_min: 0.0, ft_max: 0.0 };
        assert!(bad.validate().is_err());
        // Abort packages skip the corridor checks entirely.
        let mut abort = bad.clone();
        abort.mode = PitMode::Abort;
        assert!(abort.validate().is_ok());
    }

    #[test]
    fn window_membership_uses_interval_midpoints() {
        let road = RoadSpec {
            topology: crate::scenario::RoadTopology::StraightUrban,
            lane_count: 2,
            lane_width: 3.5,
            half_width: 5.0,
            length: 200.0,
        };
        let pkg = DecisionPackage {
            mode: PitMode::Abort,
            road,
            obstacles: vec![],
            terminal_set: TerminalSet {
                station_range: [0.0, 200.0],
                lateral_range: [-4.5, 4.5],
                heading_center: 0.0,
                heading_halfwidth: 0.5,
                speed_cap: 12.0,
            },
            force_corridor: ForceCorridor { dt: 0.05, boxes: vec![] },
            bullet_envelope: BulletEnvelope::standard(5.0, 0.0),
            contact_window: [0.4, 0.9],
            post_safety: PostSafety { d_safe: 0.5, max_yaw_rate: 2.5 },
        };
        // Interval 7 midpoint 0.375 < 0.4: out. Interval 8 midpoint 0.425: in.
        assert!(!pkg.step_in_window(7, 0.05));
        assert!(pkg.step_in_window(8, 0.05));
        // Interval 17 midpoint 0.875: in. Interval 18 midpoint 0.925: out.
        assert!(pkg.step_in_window(17, 0.05));
        assert!(!pkg.step_in_window(18, 0.05));
    }

    #[test]
    fn default_config_is_valid_and_grids_multiply_out() {
        let cfg = PlannerConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_steps(), 40);
        let per_mode = cfg.onset_grid.len() * cfg.accel_grid.len() * cfg.duration_grid.len() * cfg.ratio_grid.len();
        assert_eq!(2 * per_mode, 192);
    }
}
