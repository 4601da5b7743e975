//! Reference trajectories for the tracking layer.
//!
//! The approach reference predicts the target forward (constant world
//! velocity and yaw rate), places the bullet's striking corner on a standoff
//! point off the planned panel, and ramps that standoff to a slight press as
//! the contact window opens. All generated relative references are clamped
//! into the package's approach envelope so the tracker is never asked to
//! leave the commitment.

use crate::dynamics::{nominal_lever, VehiclePreset, WorldState};
use crate::math::{wrap_to_pi, Rot2};
use crate::planner::{predict_target_pose, DecisionPackage};
use crate::scenario::RoadSpec;

use super::RelativeState;

/// Lateral standoff of the striking corner from the panel at the start of
/// the approach ramp (meters).
const STANDOFF_MAX: f64 = 0.6;
/// Seconds over which the standoff ramps down during the approach.
const STANDOFF_RAMP: f64 = 1.0;
/// Press depth (meters) commanded through the window so the penalty contact
/// actually engages and holds.
const PRESS_DEPTH: f64 = 0.08;
/// Seconds before the window opens at which the reference already commands
/// the press. The chassis tracks laterally with a sizeable lag; without the
/// lead the corner would arrive well after the committed pulse has started.
const PRESS_LEAD: f64 = 0.25;
/// Closing-speed offset added to the target speed before the window (m/s).
const APPROACH_OVERTAKE: f64 = 1.5;
/// Overtake retained inside the window to hold station on the panel (m/s).
const WINDOW_OVERTAKE: f64 = 0.5;
/// Lateral clearance held off the target's lane while disengaging (meters).
const RETREAT_CLEARANCE: f64 = 2.8;
/// Fraction of current speed commanded while disengaging.
const RETREAT_SPEED_FRACTION: f64 = 0.8;
/// Floor on the disengagement speed command (m/s).
const RETREAT_SPEED_MIN: f64 = 4.0;
/// Cap on the target yaw rate used when predicting reference poses (rad/s).
/// Once the spin is underway the panel rotates far faster than the bullet
/// could follow; capping the prediction keeps the tracking references on the
/// roughly road-aligned station the bullet should actually hold while the
/// tracker's own surrogate rollout sees the true spin.
const REF_YAW_RATE_CAP: f64 = 0.5;

/// Per-step references over one tracking horizon. Entry `k` refers to the
/// state reached after control interval `k` (so `tau0 + (k + 1) dt` in
/// package-relative time).
#[derive(Debug, Clone)]
pub struct ReferencePlan {
    /// Relative reference in world coordinates, already clamped into the
    /// package envelope (expressed there in the target's frame).
    pub rel: Vec<RelativeState>,
    /// Absolute bullet position references for the chassis-only tracker.
    pub abs_pos: Vec<[f64; 2]>,
    /// Absolute heading references, unwrapped near the bullet's heading.
    pub abs_psi: Vec<f64>,
    /// Absolute speed references.
    pub abs_speed: Vec<f64>,
    /// Predicted target heading per step (unwrapped).
    pub target_psi: Vec<f64>,
}

/// Clamp a world-frame relative reference into the envelope, working in the
/// target's frame; the heading component is clamped around the cone center.
fn clamp_into_envelope(pkg: &DecisionPackage, rel: RelativeState, psi_t: f64) -> RelativeState {
    let env = &pkg.bullet_envelope;
    let e = rel.in_target_frame(psi_t);
    let ahead = e[0].clamp(env.lo[0], env.hi[0]);
    let left = e[1].clamp(env.lo[1], env.hi[1]);
    let c = env.heading_center();
    let half = 0.5 * (env.hi[2] - env.lo[2]);
    let dpsi = c + wrap_to_pi(e[2] - c).clamp(-half, half);
    let dv = e[3].clamp(env.lo[3], env.hi[3]);
    let world = Rot2::new(psi_t).apply([ahead, left]);
    RelativeState { dx: world[0], dy: world[1], dpsi, dv }
}

/// Approach/press reference for an active (non-abort) package.
///
/// `tau0` is the package-relative time of the current state; references are
/// generated for the `n` intervals that follow.
pub fn generate_reference(
    pkg: &DecisionPackage,
    world: &WorldState,
    tau0: f64,
    preset: &VehiclePreset,
    n: usize,
    dt: f64,
) -> ReferencePlan {
    let side = pkg.mode.side();
    let tp = &preset.target;
    let bp = &preset.bullet;
    let lever_t = nominal_lever(tp, side);
    let corner_b = [0.5 * bp.length, -side * 0.5 * bp.width];
    let chi = pkg.bullet_envelope.heading_center();
    let [t_on, t_off] = pkg.contact_window;
    let v_t_world = Rot2::new(world.target.psi).apply([world.target.vx, world.target.vy]);
    let v_t_speed = v_t_world[0].hypot(v_t_world[1]);
    let mut tgt_pred = world.target;
    tgt_pred.psi_dot = tgt_pred.psi_dot.clamp(-REF_YAW_RATE_CAP, REF_YAW_RATE_CAP);

    let mut plan = ReferencePlan {
        rel: Vec::with_capacity(n),
        abs_pos: Vec::with_capacity(n),
        abs_psi: Vec::with_capacity(n),
        abs_speed: Vec::with_capacity(n),
        target_psi: Vec::with_capacity(n),
    };
    let mut psi_prev = world.bullet.psi;
    for k in 0..n {
        let ahead = (k + 1) as f64 * dt;
        let tau = tau0 + ahead;
        let (pos_t, psi_t) = predict_target_pose(&tgt_pred, ahead);

        // Standoff schedule: ramp in, reach the panel a lead before the
        // window opens, hold the press through it, then clear off.
        let standoff = if tau <= t_off {
            let ramp = (STANDOFF_MAX * (t_on - PRESS_LEAD - tau) / STANDOFF_RAMP).clamp(0.0, STANDOFF_MAX);
            let press = ((tau - (t_on - PRESS_LEAD)) / PRESS_LEAD).clamp(0.0, 1.0);
            ramp - press * PRESS_DEPTH
        } else {
            STANDOFF_MAX
        };
        let rot_t = Rot2::new(psi_t);
        let panel = rot_t.apply(lever_t);
        let normal = [-side * psi_t.sin(), side * psi_t.cos()];
        let corner_des = [
            pos_t[0] + panel[0] + standoff * normal[0],
            pos_t[1] + panel[1] + standoff * normal[1],
        ];
        let psi_b_des = psi_t + chi;
        let corner_world = Rot2::new(psi_b_des).apply(corner_b);
        let center = [corner_des[0] - corner_world[0], corner_des[1] - corner_world[1]];

        let overtake = if tau < t_on {
            APPROACH_OVERTAKE
        } else if tau <= t_off {
            WINDOW_OVERTAKE
        } else {
            0.0
        };
        let speed = (v_t_speed + overtake).max(0.0);

        let rel = clamp_into_envelope(
            pkg,
            RelativeState {
                dx: center[0] - pos_t[0],
                dy: center[1] - pos_t[1],
                dpsi: chi,
                dv: speed - v_t_speed,
            },
            psi_t,
        );

        // Unwrap the heading reference near the previous sample so the
        // quadratic tracking error never jumps across the angle cut.
        let psi_ref = psi_prev + wrap_to_pi(psi_b_des - psi_prev);
        psi_prev = psi_ref;

        plan.rel.push(rel);
        plan.abs_pos.push(center);
        plan.abs_psi.push(psi_ref);
        plan.abs_speed.push(speed);
        plan.target_psi.push(psi_t);
    }
    plan
}

/// Disengagement reference: continue down the road at reduced speed while
/// holding a lateral clearance off the (likely stopped) target's lane.
pub fn retreat_reference(road: &RoadSpec, world: &WorldState, side: f64, n: usize, dt: f64) -> ReferencePlan {
    let b = &world.bullet;
    let (s_b, lat_b) = road.station_of([b.x, b.y]);
    let (_, lat_t) = road.station_of([world.target.x, world.target.y]);
    let speed_now = b.vx.hypot(b.vy);
    let speed = (RETREAT_SPEED_FRACTION * speed_now).max(RETREAT_SPEED_MIN);

    // Pass on the strike side, clear of both the target and the boundary.
    let lat_cap = (road.half_width - 1.8).max(0.0);
    let mut lat_ref = lat_b.clamp(-lat_cap, lat_cap);
    if (lat_ref - lat_t).abs() < RETREAT_CLEARANCE {
        let dir = if side != 0.0 { side } else if lat_b >= lat_t { 1.0 } else { -1.0 };
        lat_ref = (lat_t + dir * RETREAT_CLEARANCE).clamp(-lat_cap, lat_cap);
    }

    let mut plan = ReferencePlan {
        rel: Vec::with_capacity(n),
        abs_pos: Vec::with_capacity(n),
        abs_psi: Vec::with_capacity(n),
        abs_speed: Vec::with_capacity(n),
        target_psi: Vec::with_capacity(n),
    };
    let mut psi_prev = b.psi;
    for k in 0..n {
        let s = s_b + speed * (k + 1) as f64 * dt;
        let (c, heading) = road.centerline_at(s);
        let normal = [-heading.sin(), heading.cos()];
        let pos = [c[0] + lat_ref * normal[0], c[1] + lat_ref * normal[1]];
        let psi_ref = psi_prev + wrap_to_pi(heading - psi_prev);
        psi_prev = psi_ref;
        plan.rel.push(RelativeState { dx: 0.0, dy: 0.0, dpsi: 0.0, dv: 0.0 });
        plan.abs_pos.push(pos);
        plan.abs_psi.push(psi_ref);
        plan.abs_speed.push(speed);
        plan.target_psi.push(world.target.psi);
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{BulletState, TargetState, VehiclePreset, CONTROL_DT};
    use crate::planner::{plan, PlanEnv, PlannerConfig, PitMode};
    use crate::planner::testutil::toy_spin_net;
    use crate::scenario::{RoadSpec, RoadTopology};
    use approx::assert_abs_diff_eq;

    fn straight_road() -> RoadSpec {
        RoadSpec {
            topology: RoadTopology::StraightUrban,
            lane_count: 2,
            lane_width: 3.5,
            half_width: 5.25,
            length: 200.0,
        }
    }

    fn world() -> WorldState {
        let target = TargetState { vx: 11.0, vy: 0.0, psi: 0.0, psi_dot: 0.0, phi_dot: 0.0, phi: 0.0, x: 42.0, y: 0.0 };
        let bullet = BulletState { x: 36.0, y: 1.8, psi: 0.0, vx: 13.0, vy: 0.0, r: 0.0 };
        WorldState::new(target, bullet)
    }

    fn left_package() -> DecisionPackage {
        let (net, norm) = toy_spin_net();
        let env = PlanEnv {
            road: straight_road(),
            obstacles: vec![],
            mu: 0.9,
            preset: VehiclePreset::full_size(),
        };
        let (pkg, _) = plan(&world(), &env, &net, &norm, &PlannerConfig::default()).unwrap();
        assert_eq!(pkg.mode, PitMode::PitLeft);
        pkg
    }

    #[test]
    fn strike_corner_lands_on_the_panel_when_the_window_opens() {
        let pkg = left_package();
        let preset = VehiclePreset::full_size();
        let w = world();
        let n = 20;
        let plan = generate_reference(&pkg, &w, 0.0, &preset, n, CONTROL_DT);

        // Find the first step inside the window and verify the commanded
        // corner sits a press depth inside the predicted panel point.
        let t_on = pkg.contact_window[0];
        let k_in = (0..n)
            .find(|&k| (k + 1) as f64 * CONTROL_DT >= t_on + CONTROL_DT * 0.5)
            .expect("window must open inside the horizon");
        let tau = (k_in + 1) as f64 * CONTROL_DT;
        let (pos_t, psi_t) = predict_target_pose(&w.target, tau);
        let lever = nominal_lever(&preset.target, 1.0);
        let panel = Rot2::new(psi_t).apply(lever);
        let panel_pt = [pos_t[0] + panel[0], pos_t[1] + panel[1]];

        let corner_b = [0.5 * preset.bullet.length, -0.5 * preset.bullet.width];
        let psi_des = psi_t + pkg.bullet_envelope.heading_center();
        let corner_off = Rot2::new(psi_des).apply(corner_b);
        let corner = [
            plan.abs_pos[k_in][0] + corner_off[0],
            plan.abs_pos[k_in][1] + corner_off[1],
        ];
        // Left panel: the outward normal is +y at psi_t = 0, so a pressed
        // corner sits just *below* the panel point.
        let normal = [-psi_t.sin(), psi_t.cos()];
        let press = (corner[0] - panel_pt[0]) * normal[0] + (corner[1] - panel_pt[1]) * normal[1];
        assert_abs_diff_eq!(press, -0.08, epsilon = 1e-9);
    }

    #[test]
    fn standoff_shrinks_monotonically_during_the_approach() {
        let pkg = left_package();
        let preset = VehiclePreset::full_size();
        let w = world();
        let plan = generate_reference(&pkg, &w, 0.0, &preset, 20, CONTROL_DT);
        let t_on = pkg.contact_window[0];
        let mut last = f64::INFINITY;
        for k in 0..20 {
            let tau = (k + 1) as f64 * CONTROL_DT;
            // The unsigned distance is monotone only until the press lead
            // carries the corner through the panel plane.
            if tau >= t_on - PRESS_LEAD {
                break;
            }
            // Distance from commanded corner to predicted panel point.
            let (pos_t, psi_t) = predict_target_pose(&w.target, tau);
            let panel = Rot2::new(psi_t).apply(nominal_lever(&preset.target, 1.0));
            let panel_pt = [pos_t[0] + panel[0], pos_t[1] + panel[1]];
            let corner_b = [0.5 * preset.bullet.length, -0.5 * preset.bullet.width];
            let corner_off = Rot2::new(psi_t + pkg.bullet_envelope.heading_center()).apply(corner_b);
            let corner = [plan.abs_pos[k][0] + corner_off[0], plan.abs_pos[k][1] + corner_off[1]];
            let d = (corner[0] - panel_pt[0]).hypot(corner[1] - panel_pt[1]);
            assert!(d <= last + 1e-9, "standoff must not grow during approach");
            last = d;
        }
        assert!(last < STANDOFF_MAX + 1e-9);
    }

    #[test]
    fn window_references_lie_inside_the_envelope() {
        let pkg = left_package();
        let preset = VehiclePreset::full_size();
        let w = world();
        let plan = generate_reference(&pkg, &w, 0.0, &preset, 20, CONTROL_DT);
        for k in 0..20 {
            let e = plan.rel[k].in_target_frame(plan.target_psi[k]);
            assert!(
                pkg.bullet_envelope.contains(&e),
                "clamped reference must satisfy the envelope, step {k}: {e:?}"
            );
        }
    }

    #[test]
    fn retreat_holds_clearance_and_slows_down() {
        let road = straight_road();
        let mut w = world();
        // Bullet right next to the target's lane after the hit.
        w.bullet.x = 44.0;
        w.bullet.y = 1.0;
        w.bullet.vx = 12.0;
        let plan = retreat_reference(&road, &w, 1.0, 20, CONTROL_DT);
        for k in 0..20 {
            let (_, lat) = road.station_of(plan.abs_pos[k]);
            assert!(lat.abs() <= road.half_width - 1.8 + 1e-9);
            assert!((lat - 0.0).abs() >= RETREAT_CLEARANCE - 1e-9, "clearance off the target lane");
            assert!(plan.abs_speed[k] < 12.0);
            assert_abs_diff_eq!(plan.abs_psi[k], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn speed_reference_is_overtake_then_station_keeping() {
        let pkg = left_package();
        let preset = VehiclePreset::full_size();
        let w = world();
        let plan = generate_reference(&pkg, &w, 0.0, &preset, 20, CONTROL_DT);
        let [t_on, t_off] = pkg.contact_window;
        for k in 0..20 {
            let tau = (k + 1) as f64 * CONTROL_DT;
            if tau < t_on {
                assert_abs_diff_eq!(plan.abs_speed[k], 11.0 + APPROACH_OVERTAKE, epsilon = 1e-9);
            } else if tau <= t_off {
                assert_abs_diff_eq!(plan.abs_speed[k], 11.0 + WINDOW_OVERTAKE, epsilon = 1e-9);
            }
        }
    }
}
