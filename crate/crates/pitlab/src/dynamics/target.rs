//! Reference (oracle) target vehicle model: planar rigid body with linear
//! clamped tires plus a spring-damper roll degree of freedom excited by
//! lateral acceleration.

use super::bullet::{axle_loads, axle_slip, tire_lateral_force};
use super::{BodyWrench, TargetInput, TargetParams, TargetState};

/// Continuous-time derivatives of the eight-state target under its own
/// inputs, an external body wrench (the contact reaction) and road adhesion
/// `mu`.
pub fn target_reference_derivatives(
    x: &TargetState,
    u: &TargetInput,
    w: &BodyWrench,
    mu: f64,
    p: &TargetParams,
) -> [f64; 8] {
    let (fz_f, fz_r) = axle_loads(p.m, p.lf, p.lr);
    let alpha_f = axle_slip(x.vy + p.lf * x.psi_dot, x.vx) - u.delta;
    let alpha_r = axle_slip(x.vy - p.lr * x.psi_dot, x.vx);
    let f_yf = tire_lateral_force(alpha_f, fz_f, mu, p.c_alpha_f);
    let f_yr = tire_lateral_force(alpha_r, fz_r, mu, p.c_alpha_r);

    // Brake torque acts against the direction of travel; smooth sign keeps
    // the model well-behaved through zero speed.
    let f_brake = -u.t_b.max(0.0) / p.r_w * (x.vx / (x.vx.abs() + 0.1));

    let (sin_d, cos_d) = u.delta.sin_cos();
    let sum_fx = -f_yf * sin_d + f_brake + w.fx;
    let sum_fy = f_yf * cos_d + f_yr + w.fy;
    let sum_mz = p.lf * f_yf * cos_d - p.lr * f_yr + w.mz;

    let vx_dot = sum_fx / p.m + x.psi_dot * x.vy;
    let vy_dot = sum_fy / p.m - x.psi_dot * x.vx;
    let psi_ddot = sum_mz / p.iz;
    // Roll is driven by the lateral specific force: vy_dot + psi_dot * vx
    // equals sum_fy / m, so the roll moment is h_cg * sum_fy.
    let phi_ddot = (p.m * p.h_cg * (vy_dot + x.psi_dot * x.vx) - p.k_phi * x.phi - p.c_phi * x.phi_dot) / p.ix;

    let (sin_psi, cos_psi) = x.psi.sin_cos();
    let x_dot = x.vx * cos_psi - x.vy * sin_psi;
    let y_dot = x.vx * sin_psi + x.vy * cos_psi;

    [vx_dot, vy_dot, x.psi_dot, psi_ddot, phi_ddot, x.phi_dot, x_dot, y_dot]
}
