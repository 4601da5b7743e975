//! Ground-truth plant: a front-steered bullet vehicle, an eight-state target
//! vehicle with a roll degree of freedom, and a penalty contact model between
//! the bullet's front corner and the target's rear-quarter panel.
//!
//! Everything here is plain `f64` and integrated with fixed-step RK4; the
//! oracle substeps at 1 ms inside each 50 ms control interval. The
//! differentiable control models live elsewhere — this module is the physics
//! the rest of the stack is judged against.

mod bullet;
mod contact;
mod oracle;
mod presets;
mod target;

pub use bullet::{bullet_derivatives, bullet_step, rear_wheel_force, tire_lateral_force};
pub use contact::{contact_detect, contact_force, map_to_body, Contact};
pub use oracle::{nominal_lever, oracle_step, target_episode_step, ContactEvent, StepInfo};
pub use presets::{PresetId, VehiclePreset};
pub use target::target_reference_derivatives;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Oracle substep length in seconds (contact pulses are resolved at 1 ms).
pub const ORACLE_SUBSTEP: f64 = 1e-3;

/// Control grid spacing in seconds.
pub const CONTROL_DT: f64 = 0.05;

#[derive(Debug, Error)]
pub enum DynamicsError {
    /// A state left the sanity envelope (non-finite or absurd magnitude).
    #[error("numerical blowup at t = {t:.3}s: {what}")]
    NumericalBlowup { t: f64, what: String },
}

/// Target vehicle state: body-frame velocities, yaw, yaw rate, roll rate,
/// roll angle, world position. Longitudinal speed is normally in the tens of
/// m/s and goes slightly negative only while the vehicle slides backwards
/// mid-spin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub vx: f64,
    pub vy: f64,
    pub psi: f64,
    pub psi_dot: f64,
    pub phi_dot: f64,
    pub phi: f64,
    pub x: f64,
    pub y: f64,
}

impl TargetState {
    pub fn to_array(&self) -> [f64; 8] {
        [self.vx, self.vy, self.psi, self.psi_dot, self.phi_dot, self.phi, self.x, self.y]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self { vx: a[0], vy: a[1], psi: a[2], psi_dot: a[3], phi_dot: a[4], phi: a[5], x: a[6], y: a[7] }
    }
}

/// Target vehicle parameters. `r_w` is the effective wheel radius used to
/// convert brake torque to longitudinal force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    pub m: f64,
    pub iz: f64,
    pub ix: f64,
    pub lf: f64,
    pub lr: f64,
    pub h_cg: f64,
    pub k_phi: f64,
    pub c_phi: f64,
    pub c_alpha_f: f64,
    pub c_alpha_r: f64,
    pub width: f64,
    pub length: f64,
    pub r_w: f64,
}

/// Target inputs: steering angle and brake torque. During a PIT episode the
/// target is treated as out of control and both default to zero / held.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetInput {
    pub delta: f64,
    pub t_b: f64,
}

/// Bullet vehicle state: world position, yaw, body-frame velocities, yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulletState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
}

impl BulletState {
    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.psi, self.vx, self.vy, self.r]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { x: a[0], y: a[1], psi: a[2], vx: a[3], vy: a[4], r: a[5] }
    }
}

/// Bullet vehicle parameters: bicycle geometry plus a rear driveline
/// (efficiency, gear ratio, wheel radius) and input bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulletParams {
    pub m: f64,
    pub iz: f64,
    pub lf: f64,
    pub lr: f64,
    pub eta_d: f64,
    pub i_g: f64,
    pub r_w: f64,
    pub c_alpha_f: f64,
    pub c_alpha_r: f64,
    pub width: f64,
    pub length: f64,
    /// Drive torque bounds `[min, max]` in N*m (negative = braking).
    pub t_bounds: [f64; 2],
    /// Steering bounds `[min, max]` in rad.
    pub delta_bounds: [f64; 2],
}

/// Bullet inputs: front steering angle and rear drive torque.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BulletInput {
    pub delta_f: f64,
    pub t_r: f64,
}

/// Contact force expressed in the contact frame. `normal >= 0` is the
/// compression force along the frame's outward normal; `tangential` is the
/// friction component along the frame tangent, bounded by `mu_c * normal`.
/// By convention the pair acts as `+f` on the bullet and `-f` on the target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactForce {
    pub normal: f64,
    pub tangential: f64,
}

/// Contact frame: heading of the outward normal of the contacted target
/// panel, and the world-frame contact point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactFrame {
    pub gamma: f64,
    pub point: [f64; 2],
}

/// A force + yaw moment expressed in some vehicle's body frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BodyWrench {
    pub fx: f64,
    pub fy: f64,
    pub mz: f64,
}

/// Penalty contact parameters: normal stiffness and damping, tangential
/// damping, and the contact friction ratio bounding tangential force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub k_c: f64,
    pub c_c: f64,
    pub c_t: f64,
    pub mu_c: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        // Stiffness sized so a firm shove penetrates a few centimetres and a
        // 3-4 m/s closing speed produces a pulse on the order of 100 ms.
        Self { k_c: 2.0e5, c_c: 4.0e3, c_t: 2.0e3, mu_c: 0.6 }
    }
}

/// Combined world state advanced by the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub target: TargetState,
    pub bullet: BulletState,
    pub t: f64,
    /// Whether the vehicles were in contact at the end of the last step.
    pub in_contact: bool,
    /// Most recent contact seen, if any.
    pub last_contact: Option<(ContactFrame, ContactForce)>,
}

impl WorldState {
    pub fn new(target: TargetState, bullet: BulletState) -> Self {
        Self { target, bullet, t: 0.0, in_contact: false, last_contact: None }
    }
}

/// Classic fixed-step RK4 for a time-invariant right-hand side.
pub(crate) fn rk4<const N: usize>(f: impl Fn(&[f64; N]) -> [f64; N], x: &[f64; N], dt: f64) -> [f64; N] {
    let k1 = f(x);
    let mut x2 = *x;
    for i in 0..N {
        x2[i] = x[i] + 0.5 * dt * k1[i];
    }
    let k2 = f(&x2);
    for i in 0..N {
        x2[i] = x[i] + 0.5 * dt * k2[i];
    }
    let k3 = f(&x2);
    for i in 0..N {
        x2[i] = x[i] + dt * k3[i];
    }
    let k4 = f(&x2);
    let mut out = *x;
    for i in 0..N {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}
