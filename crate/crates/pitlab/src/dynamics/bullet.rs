//! Control-oriented bullet vehicle model: a single-track (bicycle) chassis
//! with linear tires clamped at the adhesion limit and a rear driveline.

use super::{rk4, BodyWrench, BulletInput, BulletParams, BulletState};

/// Speed regularisation for slip angles. Using `|vx| + EPS` in the slip
/// denominator keeps the lateral force opposing lateral velocity at any
/// longitudinal speed (including standstill and backwards sliding).
pub(crate) const SLIP_V_EPS: f64 = 0.3;

/// Gravitational acceleration used for static axle loads.
pub(crate) const G: f64 = 9.81;

/// Longitudinal force at the rear axle from a drive torque request. The
/// request is clamped to the driveline's torque bounds first.
pub fn rear_wheel_force(t_r: f64, p: &BulletParams) -> f64 {
    let t = t_r.clamp(p.t_bounds[0], p.t_bounds[1]);
    p.eta_d * p.i_g * t / p.r_w
}

/// Linear tire lateral force clamped at the adhesion limit `mu * fz`.
pub fn tire_lateral_force(slip: f64, fz: f64, mu: f64, c_alpha: f64) -> f64 {
    let limit = mu * fz;
    (-c_alpha * slip).clamp(-limit, limit)
}

/// Slip angle of an axle whose lateral velocity is `vy_axle`, regularised so
/// it degrades gracefully at low and negative longitudinal speeds.
pub(crate) fn axle_slip(vy_axle: f64, vx: f64) -> f64 {
    (vy_axle / (vx.abs() + SLIP_V_EPS)).atan()
}

/// Static axle vertical loads `(front, rear)` for a bicycle chassis.
pub(crate) fn axle_loads(m: f64, lf: f64, lr: f64) -> (f64, f64) {
    let l = lf + lr;
    (m * G * lr / l, m * G * lf / l)
}

/// Continuous-time derivatives of the bullet state under steering, rear drive
/// and an external body wrench (the contact reaction).
pub fn bullet_derivatives(x: &BulletState, u: &BulletInput, w: &BodyWrench, mu: f64, p: &BulletParams) -> [f64; 6] {
    let delta = u.delta_f.clamp(p.delta_bounds[0], p.delta_bounds[1]);
    let f_xr = rear_wheel_force(u.t_r, p);
    let (fz_f, fz_r) = axle_loads(p.m, p.lf, p.lr);

    let alpha_f = axle_slip(x.vy + p.lf * x.r, x.vx) - delta;
    let alpha_r = axle_slip(x.vy - p.lr * x.r, x.vx);
    let f_yf = tire_lateral_force(alpha_f, fz_f, mu, p.c_alpha_f);
    let f_yr = tire_lateral_force(alpha_r, fz_r, mu, p.c_alpha_r);

    let (sin_psi, cos_psi) = x.psi.sin_cos();
    let (sin_d, cos_d) = delta.sin_cos();

    let x_dot = x.vx * cos_psi - x.vy * sin_psi;
    let y_dot = x.vx * sin_psi + x.vy * cos_psi;
    let vx_dot = (f_xr - f_yf * sin_d + w.fx) / p.m + x.r * x.vy;
    let vy_dot = (f_yf * cos_d + f_yr + w.fy) / p.m - x.r * x.vx;
    let r_dot = (p.lf * f_yf * cos_d - p.lr * f_yr + w.mz) / p.iz;

    [x_dot, y_dot, x.r, vx_dot, vy_dot, r_dot]
}

/// One RK4 step of the bullet model with inputs and wrench held constant.
pub fn bullet_step(x: &BulletState, u: &BulletInput, w: &BodyWrench, mu: f64, dt: f64, p: &BulletParams) -> BulletState {
    let arr = rk4(
        |s| bullet_derivatives(&BulletState::from_array(*s), u, w, mu, p),
        &x.to_array(),
        dt,
    );
    BulletState::from_array(arr)
}
