//! The two-vehicle oracle stepper and the force-driven target episode stepper
//! used to manufacture surrogate training data.
//!
//! Each control interval is integrated as a sequence of 1 ms substeps. When
//! the vehicles are in contact, the contact force pair is evaluated once per
//! substep and frozen in the *world* frame for that substep; the combined
//! 14-state system is then integrated with RK4, converting the frozen world
//! force into each body's frame at every stage. Freezing in the world frame
//! is what keeps the pair equal-and-opposite throughout the substep, so total
//! linear momentum is conserved to rounding error.

use super::bullet::bullet_derivatives;
use super::contact::{contact_detect, contact_force};
use super::target::target_reference_derivatives;
use super::{
    rk4, BodyWrench, BulletInput, BulletParams, BulletState, ContactForce, ContactFrame, ContactParams,
    DynamicsError, TargetInput, TargetParams, TargetState, WorldState, ORACLE_SUBSTEP,
};
use crate::math::{cross2, Rot2};

/// One contact substep, recorded for diagnostics and invariant checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactEvent {
    pub t: f64,
    pub frame: ContactFrame,
    pub force: ContactForce,
    pub wrench_target: BodyWrench,
    pub wrench_bullet: BodyWrench,
    pub psi_target: f64,
    pub psi_bullet: f64,
}

/// Summary of one oracle control step.
#[derive(Debug, Clone, Default)]
pub struct StepInfo {
    /// Contact occurred in at least one substep.
    pub contact_any: bool,
    pub n_contact_substeps: usize,
    /// Contact force averaged over *all* substeps of the interval (impulse
    /// over interval length); this is the force the surrogate is trained on.
    pub mean_force: ContactForce,
    pub peak_normal: f64,
    pub events: Vec<ContactEvent>,
}

/// Velocity of a body-fixed point in the world frame.
fn point_velocity(v_world: [f64; 2], omega: f64, r_world: [f64; 2]) -> [f64; 2] {
    [v_world[0] - omega * r_world[1], v_world[1] + omega * r_world[0]]
}

fn check_sane(t: f64, target: &TargetState, bullet: &BulletState) -> Result<(), DynamicsError> {
    let fields = [
        target.vx, target.vy, target.psi_dot, target.phi_dot, target.phi, target.x, target.y,
        bullet.vx, bullet.vy, bullet.r, bullet.x, bullet.y,
    ];
    if fields.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NumericalBlowup { t, what: "non-finite state".into() });
    }
    let bad = target.vx.abs() > 150.0
        || target.vy.abs() > 150.0
        || target.psi_dot.abs() > 25.0
        || target.phi.abs() > 1.2
        || bullet.vx.abs() > 150.0
        || bullet.vy.abs() > 150.0
        || bullet.r.abs() > 25.0
        || target.x.abs() > 1.0e5
        || target.y.abs() > 1.0e5
        || bullet.x.abs() > 1.0e5
        || bullet.y.abs() > 1.0e5;
    if bad {
        return Err(DynamicsError::NumericalBlowup { t, what: "state outside sanity envelope".into() });
    }
    Ok(())
}

/// Advance the coupled world by one control interval `dt` with both vehicles'
/// inputs held. Returns the new world plus a summary of any contact activity.
pub fn oracle_step(
    world: &WorldState,
    u_bullet: &BulletInput,
    u_target: &TargetInput,
    mu: f64,
    dt: f64,
    tp: &TargetParams,
    bp: &BulletParams,
    cp: &ContactParams,
) -> Result<(WorldState, StepInfo), DynamicsError> {
    let n_sub = (dt / ORACLE_SUBSTEP).round().max(1.0) as usize;
    let h = dt / n_sub as f64;

    let mut target = world.target;
    let mut bullet = world.bullet;
    let mut info = StepInfo::default();
    let mut sum_fn = 0.0;
    let mut sum_ft = 0.0;
    let mut last_contact = world.last_contact;
    let mut in_contact_now = false;

    for k in 0..n_sub {
        let t_sub = world.t + k as f64 * h;
        let contact = contact_detect(&target, &bullet, tp, bp);

        // Frozen world-frame force pair and moments for this substep.
        let mut world_force = [0.0, 0.0];
        let mut mz_target = 0.0;
        let mut mz_bullet = 0.0;

        if let Some(c) = contact {
            let rot_t = Rot2::new(target.psi);
            let rot_b = Rot2::new(bullet.psi);
            let v_t = rot_t.apply([target.vx, target.vy]);
            let v_b = rot_b.apply([bullet.vx, bullet.vy]);
            let r_t = [c.frame.point[0] - target.x, c.frame.point[1] - target.y];
            let r_b = [c.frame.point[0] - bullet.x, c.frame.point[1] - bullet.y];
            let vp_t = point_velocity(v_t, target.psi_dot, r_t);
            let vp_b = point_velocity(v_b, bullet.r, r_b);
            let rel = [vp_b[0] - vp_t[0], vp_b[1] - vp_t[1]];
            let n_hat = [c.frame.gamma.cos(), c.frame.gamma.sin()];
            let t_hat = [-c.frame.gamma.sin(), c.frame.gamma.cos()];
            let vn_closing = -(rel[0] * n_hat[0] + rel[1] * n_hat[1]);
            let vt = rel[0] * t_hat[0] + rel[1] * t_hat[1];

            let f = contact_force(c.depth, vn_closing, vt, cp);
            // +f on the bullet, -f on the target, expressed in the world
            world_force = [
                f.normal * n_hat[0] + f.tangential * t_hat[0],
                f.normal * n_hat[1] + f.tangential * t_hat[1],
            ];
            mz_target = cross2(r_t, [-world_force[0], -world_force[1]]);
            mz_bullet = cross2(r_b, world_force);

            let wrench_target = super::map_to_body(
                &ContactForce { normal: -f.normal, tangential: -f.tangential },
                c.frame.gamma,
                target.psi,
                c.lever_target,
            );
            let wrench_bullet = super::map_to_body(&f, c.frame.gamma, bullet.psi, c.lever_bullet);
            info.events.push(ContactEvent {
                t: t_sub,
                frame: c.frame,
                force: f,
                wrench_target,
                wrench_bullet,
                psi_target: target.psi,
                psi_bullet: bullet.psi,
            });

            info.contact_any = true;
            info.n_contact_substeps += 1;
            info.peak_normal = info.peak_normal.max(f.normal);
            sum_fn += f.normal;
            sum_ft += f.tangential;
            last_contact = Some((c.frame, f));
            if k == n_sub - 1 {
                in_contact_now = true;
            }
        }

        // Combined state: target (8) then bullet (6). The frozen world force
        // is rotated into each body's frame at every RK4 stage.
        let mut combined = [0.0; 14];
        combined[..8].copy_from_slice(&target.to_array());
        combined[8..].copy_from_slice(&bullet.to_array());
        let next = rk4(
            |s| {
                let ts = TargetState::from_array(s[..8].try_into().unwrap());
                let bs = BulletState::from_array(s[8..].try_into().unwrap());
                let ft = Rot2::new(ts.psi).apply_inv([-world_force[0], -world_force[1]]);
                let fb = Rot2::new(bs.psi).apply_inv(world_force);
                let wt = BodyWrench { fx: ft[0], fy: ft[1], mz: mz_target };
                let wb = BodyWrench { fx: fb[0], fy: fb[1], mz: mz_bullet };
                let dt_ = target_reference_derivatives(&ts, u_target, &wt, mu, tp);
                let db = bullet_derivatives(&bs, u_bullet, &wb, mu, bp);
                let mut d = [0.0; 14];
                d[..8].copy_from_slice(&dt_);
                d[8..].copy_from_slice(&db);
                d
            },
            &combined,
            h,
        );
        target = TargetState::from_array(next[..8].try_into().unwrap());
        bullet = BulletState::from_array(next[8..].try_into().unwrap());
        check_sane(t_sub + h, &target, &bullet)?;
    }

    info.mean_force = ContactForce { normal: sum_fn / n_sub as f64, tangential: sum_ft / n_sub as f64 };
    let new_world = WorldState {
        target,
        bullet,
        t: world.t + dt,
        in_contact: in_contact_now,
        last_contact,
    };
    Ok((new_world, info))
}

/// Advance the target alone by one control interval under a prescribed
/// contact-frame force profile applied at the rear-quarter panel.
///
/// `profile(tau)` returns `(normal, tangential)` at `tau` seconds into the
/// interval, expressed in the panel contact frame of the given `side`
/// (`+1` = left panel, `-1` = right). The force is applied at the panel's
/// nominal mid-rear point; the same convention is used when the surrogate's
/// physics residual reconstructs the moment. Returns the new state and the
/// interval-mean force pair.
pub fn target_episode_step(
    x: &TargetState,
    u: &TargetInput,
    profile: impl Fn(f64) -> (f64, f64),
    side: f64,
    mu: f64,
    dt: f64,
    tp: &TargetParams,
) -> Result<(TargetState, (f64, f64)), DynamicsError> {
    let n_sub = (dt / ORACLE_SUBSTEP).round().max(1.0) as usize;
    let h = dt / n_sub as f64;
    let lever = nominal_lever(tp, side);

    let mut state = *x;
    let mut sum = (0.0, 0.0);
    for k in 0..n_sub {
        let (f_n, f_t) = profile((k as f64 + 0.5) * h);
        sum.0 += f_n;
        sum.1 += f_t;
        // Force on the target is the negated pair member; the panel frame
        // rides with the body so the body wrench is constant over the substep.
        let gamma_rel = side * std::f64::consts::FRAC_PI_2;
        let w = super::map_to_body(
            &ContactForce { normal: -f_n, tangential: -f_t },
            gamma_rel,
            0.0,
            lever,
        );
        let next = rk4(
            |s| target_reference_derivatives(&TargetState::from_array(*s), u, &w, mu, tp),
            &state.to_array(),
            h,
        );
        state = TargetState::from_array(next);
        if !state.to_array().iter().all(|v| v.is_finite()) {
            return Err(DynamicsError::NumericalBlowup { t: k as f64 * h, what: "non-finite target state".into() });
        }
    }
    Ok((state, (sum.0 / n_sub as f64, sum.1 / n_sub as f64)))
}

/// Nominal contact point on the target's rear-quarter panel, in the target's
/// body frame: mid-rear station on the requested side.
pub fn nominal_lever(tp: &TargetParams, side: f64) -> [f64; 2] {
    [-0.25 * tp.length, side * 0.5 * tp.width]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehiclePreset;

    /// A preset with tires and roll coupling disabled so that contact is the
    /// only force in play.
    fn frictionless() -> VehiclePreset {
        let mut p = VehiclePreset::full_size();
        p.target.c_alpha_f = 0.0;
        p.target.c_alpha_r = 0.0;
        p.target.h_cg = 0.0;
        p.bullet.c_alpha_f = 0.0;
        p.bullet.c_alpha_r = 0.0;
        p
    }

    /// Bullet positioned so its right-front corner just touches the target's
    /// left-rear panel, with a lateral closing velocity.
    fn contact_setup(p: &VehiclePreset) -> WorldState {
        let target = TargetState { vx: 10.0, vy: 0.0, psi: 0.0, psi_dot: 0.0, phi_dot: 0.0, phi: 0.0, x: 0.0, y: 0.0 };
        let psi_b = -0.08;
        let corner_t = [-0.25 * p.target.length, 0.5 * p.target.width + 0.002];
        let r = crate::math::Rot2::new(psi_b);
        let off = r.apply([0.5 * p.bullet.length, -0.5 * p.bullet.width]);
        let bullet = BulletState {
            x: corner_t[0] - off[0],
            y: corner_t[1] - off[1],
            psi: psi_b,
            vx: 13.0,
            vy: 0.0,
            r: 0.0,
        };
        WorldState::new(target, bullet)
    }

    fn momenta(p: &VehiclePreset, w: &WorldState) -> ([f64; 2], f64) {
        let vt = crate::math::Rot2::new(w.target.psi).apply([w.target.vx, w.target.vy]);
        let vb = crate::math::Rot2::new(w.bullet.psi).apply([w.bullet.vx, w.bullet.vy]);
        let px = p.target.m * vt[0] + p.bullet.m * vb[0];
        let py = p.target.m * vt[1] + p.bullet.m * vb[1];
        let ke = 0.5 * p.target.m * (w.target.vx.powi(2) + w.target.vy.powi(2))
            + 0.5 * p.target.iz * w.target.psi_dot.powi(2)
            + 0.5 * p.bullet.m * (w.bullet.vx.powi(2) + w.bullet.vy.powi(2))
            + 0.5 * p.bullet.iz * w.bullet.r.powi(2);
        ([px, py], ke)
    }

    #[test]
    fn contact_episode_conserves_momentum_and_dissipates() {
        let p = frictionless();
        let mut w = contact_setup(&p);
        let (p0, ke0) = momenta(&p, &w);
        let mut saw_contact = false;
        let mut n_contact_steps = 0;
        for _ in 0..12 {
            let (next, info) = oracle_step(
                &w,
                &BulletInput::default(),
                &TargetInput::default(),
                0.9,
                super::super::CONTROL_DT,
                &p.target,
                &p.bullet,
                &p.contact,
            )
            .expect("step");
            saw_contact |= info.contact_any;
            if info.contact_any {
                n_contact_steps += 1;
            }
            // Newton's third law in the world frame at every contact substep
            for ev in &info.events {
                let ft = crate::math::Rot2::new(ev.psi_target).apply([ev.wrench_target.fx, ev.wrench_target.fy]);
                let fb = crate::math::Rot2::new(ev.psi_bullet).apply([ev.wrench_bullet.fx, ev.wrench_bullet.fy]);
                let mag = (ev.force.normal.powi(2) + ev.force.tangential.powi(2)).sqrt().max(1.0);
                assert!((ft[0] + fb[0]).abs() <= 1e-12 * mag, "fx pair violation");
                assert!((ft[1] + fb[1]).abs() <= 1e-12 * mag, "fy pair violation");
                assert!(ev.force.normal >= 0.0);
                assert!(ev.force.tangential.abs() <= p.contact.mu_c * ev.force.normal + 1e-9);
            }
            w = next;
        }
        assert!(saw_contact, "constructed setup must make contact");
        assert!(n_contact_steps >= 1);
        // the episode ends separated
        assert!(!w.in_contact, "bodies should have separated");

        let (p1, ke1) = momenta(&p, &w);
        let pmag = (p0[0].powi(2) + p0[1].powi(2)).sqrt();
        assert!((p1[0] - p0[0]).abs() <= 1e-6 * pmag, "px drift {}", (p1[0] - p0[0]).abs() / pmag);
        assert!((p1[1] - p0[1]).abs() <= 1e-6 * pmag, "py drift {}", (p1[1] - p0[1]).abs() / pmag);
        assert!(ke1 <= ke0 * (1.0 + 1e-9), "kinetic energy must not grow: {ke0} -> {ke1}");
        assert!(ke1 < ke0, "contact damping should dissipate some energy");
    }

    #[test]
    fn no_contact_is_pure_decoupled_motion() {
        let p = VehiclePreset::full_size();
        let target = TargetState { vx: 12.0, vy: 0.0, psi: 0.0, psi_dot: 0.0, phi_dot: 0.0, phi: 0.0, x: 0.0, y: 0.0 };
        let bullet = BulletState { x: -30.0, y: 3.0, psi: 0.0, vx: 15.0, vy: 0.0, r: 0.0 };
        let w = WorldState::new(target, bullet);
        let (next, info) = oracle_step(
            &w,
            &BulletInput::default(),
            &TargetInput::default(),
            0.9,
            super::super::CONTROL_DT,
            &p.target,
            &p.bullet,
            &p.contact,
        )
        .expect("step");
        assert!(!info.contact_any);
        assert!(info.events.is_empty());
        assert!((next.target.x - 0.6).abs() < 1e-9);
        assert!((next.bullet.x - (-30.0 + 0.75)).abs() < 1e-9);
    }

    #[test]
    fn blowup_is_reported() {
        let p = VehiclePreset::full_size();
        let target = TargetState { vx: f64::NAN, vy: 0.0, psi: 0.0, psi_dot: 0.0, phi_dot: 0.0, phi: 0.0, x: 0.0, y: 0.0 };
        let bullet = BulletState { x: -30.0, y: 3.0, psi: 0.0, vx: 15.0, vy: 0.0, r: 0.0 };
        let w = WorldState::new(target, bullet);
        let res = oracle_step(
            &w,
            &BulletInput::default(),
            &TargetInput::default(),
            0.9,
            super::super::CONTROL_DT,
            &p.target,
            &p.bullet,
            &p.contact,
        );
        assert!(matches!(res, Err(DynamicsError::NumericalBlowup { .. })));
    }

    #[test]
    fn pulse_episode_spins_target() {
        // A firm half-sine shove on the left-rear panel must yaw the target
        // counter-clockwise and push it to the right.
        let p = VehiclePreset::full_size();
        let x0 = TargetState { vx: 13.0, vy: 0.0, psi: 0.0, psi_dot: 0.0, phi_dot: 0.0, phi: 0.0, x: 0.0, y: 0.0 };
        let mut x = x0;
        let dur = 0.5;
        let amp = 18_000.0;
        let mut t = 0.0;
        let mut phi_mid_pulse = 0.0;
        for step in 0..12 {
            let base = t;
            let (next, _) = target_episode_step(
                &x,
                &TargetInput::default(),
                |tau| {
                    let s = (base + tau) / dur;
                    if (0.0..1.0).contains(&s) {
                        (amp * (std::f64::consts::PI * s).sin(), 0.0)
                    } else {
                        (0.0, 0.0)
                    }
                },
                1.0,
                0.9,
                super::super::CONTROL_DT,
                &p.target,
            )
            .expect("episode step");
            x = next;
            t += super::super::CONTROL_DT;
            if step == 4 {
                phi_mid_pulse = x.phi;
            }
        }
        assert!(x.psi_dot > 0.5, "yaw rate after shove: {}", x.psi_dot);
        assert!(x.vy < -0.5, "lateral shove to the right: {}", x.vy);
        // During the shove the rightward acceleration rolls the body toward
        // the impact side; once sliding, the tire reaction flips the sign.
        assert!(phi_mid_pulse < 0.0, "roll during the shove: {phi_mid_pulse}");
    }
}
