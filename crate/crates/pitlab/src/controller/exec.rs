//! Closed-loop episode executive: wires the planner, the reference
//! generator and the compiled trackers to the ground-truth plant and records
//! everything a judge needs.
//!
//! The phase machine is strictly forward: **chasing** (approach under an
//! active decision package, replanning every planner period) hands over to
//! **pit** when the contact window opens with the bullet inside the approach
//! envelope (or already touching), which hands over to **stabilization**
//! once the window has passed and contact has broken. An abort decision
//! clears the active package; a simple pursuit law then shadows the target
//! until the next replan tick reconsiders.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    nominal_lever, oracle_step, BulletInput, BulletState, ContactForce, TargetInput, TargetState, VehiclePreset,
    WorldState, CONTROL_DT,
};
use crate::math::{wrap_to_pi, Rot2};
use crate::planner::{
    plan, replan_schedule, BulletEnvelope, DecisionPackage, ForceBox, ForceCorridor, PitMode, PlanDiagnostics,
    PlanEnv, PostSafety, PredictedDisc, PulseTemplate, PlannerConfig, TerminalSet,
};
use crate::scenario::ScenarioSpec;
use crate::surrogate::{DenseNet, Normalization};

use super::mpc::{MpcConfig, MpcProblem, PinnedState};
use super::reference::{generate_reference, retreat_reference};
use super::{relative_state, ControllerVariant, Phase};

/// Surrogate models the controller stack runs on.
pub struct ControlModels {
    pub net: DenseNet,
    pub norm: Normalization,
}

/// Episode-level configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    pub planner: PlannerConfig,
    pub mpc: MpcConfig,
    /// Episode wall-clock budget (s).
    pub t_max: f64,
    /// Yaw-rate threshold below which the spun target counts as settling.
    pub settle_yaw: f64,
    /// Consecutive settled steps before the episode ends early.
    pub settle_hold_steps: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            planner: PlannerConfig::default(),
            mpc: MpcConfig::default(),
            t_max: 8.0,
            settle_yaw: 0.35,
            settle_hold_steps: 8,
        }
    }
}

/// A decision package as issued mid-run, with the step it was issued at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageLog {
    pub at_step: usize,
    pub package: DecisionPackage,
    pub diagnostics: PlanDiagnostics,
}

/// Complete trace of one closed-loop episode. `states` holds one entry per
/// control step plus the initial state; every other per-step vector holds
/// one entry per executed step. If the plant faulted, the final input has no
/// successor state and `plant_failure` carries the reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub scenario: ScenarioSpec,
    pub seed: u64,
    pub variant: ControllerVariant,
    pub dt: f64,
    pub states: Vec<WorldState>,
    pub inputs: Vec<BulletInput>,
    /// Contact force the tracker planned for each interval (zero outside the
    /// pit phase).
    pub planned_force: Vec<ContactForce>,
    /// Mean contact force the plant actually produced each interval.
    pub oracle_force: Vec<ContactForce>,
    pub phases: Vec<Phase>,
    /// Modeled planning time charged to each step (nonzero on replan ticks).
    pub plan_ms: Vec<f64>,
    /// Modeled tracking-solve time charged to each step.
    pub ctrl_ms: Vec<f64>,
    /// Every package issued, including aborts.
    pub packages: Vec<PackageLog>,
    pub plant_failure: Option<String>,
}

impl RunRecord {
    pub fn n_steps(&self) -> usize {
        self.inputs.len()
    }

    /// The last package issued at or before `step`, if any.
    pub fn package_at(&self, step: usize) -> Option<&PackageLog> {
        self.packages.iter().rev().find(|p| p.at_step <= step)
    }
}

/// Schema tag written into every record.
pub const RUN_SCHEMA_VERSION: u32 = 1;

/// Place both vehicles on the road according to the scenario: the bullet
/// center 10 m down the road offset laterally, the target ahead of it on the
/// centerline by the bumper gap, both moving at their initial speeds along
/// their headings (with the yaw rate matched to the road curvature).
pub fn initial_world(spec: &ScenarioSpec, preset: &VehiclePreset) -> WorldState {
    let road = &spec.road;
    let kappa = road.topology.curvature();
    let s_b = 10.0;
    let s_t = s_b + spec.gap + 0.5 * (preset.target.length + preset.bullet.length);

    let (c_t, th_t) = road.centerline_at(s_t);
    let target = TargetState {
        vx: spec.v_target0,
        vy: 0.0,
        psi: th_t + spec.heading_diff,
        psi_dot: kappa * spec.v_target0,
        phi_dot: 0.0,
        phi: 0.0,
        x: c_t[0],
        y: c_t[1],
    };

    let (c_b, th_b) = road.centerline_at(s_b);
    let normal = [-th_b.sin(), th_b.cos()];
    let bullet = BulletState {
        x: c_b[0] + spec.lateral_offset * normal[0],
        y: c_b[1] + spec.lateral_offset * normal[1],
        psi: th_b,
        vx: spec.v_bullet0,
        vy: 0.0,
        r: kappa * spec.v_bullet0,
    };
    WorldState::new(target, bullet)
}

/// Peak contact acceleration (m/s^2) for the fixed-commitment baseline,
/// indexed by initial closing speed and adhesion: faster closes and grippier
/// roads take (and need) firmer shoves.
const STATIC_ACCEL_TABLE: [[f64; 3]; 3] = [[5.0, 6.0, 7.0], [6.0, 8.0, 9.0], [7.0, 9.0, 11.0]];

fn snap_to_grid(t: f64) -> f64 {
    (t / CONTROL_DT).round() * CONTROL_DT
}

/// One-shot decision package for the flat baseline: no surrogate, no search.
/// The strike side comes from the bullet's initial lateral offset, the
/// contact window from a constant-speed time-to-intercept, the force
/// corridor from a half-sine pulse whose amplitude is a coarse lookup in
/// closing speed and adhesion. Issued once at the start and never revised.
pub fn static_package(spec: &ScenarioSpec, world: &WorldState, preset: &VehiclePreset, t_max: f64) -> DecisionPackage {
    let road = spec.road.clone();
    let (s_t, lat_t) = road.station_of([world.target.x, world.target.y]);
    let (s_b, lat_b) = road.station_of([world.bullet.x, world.bullet.y]);
    let side = if lat_b < lat_t { -1.0 } else { 1.0 };

    let dv0 = spec.v_bullet0 - spec.v_target0;
    let d_center = (s_t - s_b).max(0.0);
    let t_on = snap_to_grid((d_center / dv0.max(0.5)).clamp(0.5, t_max - 1.5));
    let t_off = t_on + 0.5;

    let row = if dv0 < 2.0 {
        0
    } else if dv0 < 4.0 {
        1
    } else {
        2
    };
    let col = if spec.mu < 0.6 {
        0
    } else if spec.mu < 0.8 {
        1
    } else {
        2
    };
    let amplitude = STATIC_ACCEL_TABLE[row][col] * preset.target.m;
    let pulse = PulseTemplate { amplitude, duration: t_off - t_on, onset: t_on, tangential_ratio: 0.0 };

    let w0 = snap_to_grid((t_on - 0.1).max(0.0));
    let w1 = snap_to_grid(t_off + 0.1);
    let n_boxes = (w1 / CONTROL_DT).round() as usize;
    let mu_c = preset.contact.mu_c;
    let boxes = (0..n_boxes)
        .map(|k| {
            let f = pulse.force_at((k as f64 + 0.5) * CONTROL_DT);
            if f.normal == 0.0 {
                ForceBox::ZERO
            } else {
                let band = 0.6 * mu_c * f.normal;
                ForceBox {
                    fn_min: 0.7 * f.normal,
                    fn_max: 1.3 * f.normal,
                    ft_min: f.tangential - band,
                    ft_max: f.tangential + band,
                }
            }
        })
        .collect();

    let s_term = s_t + spec.v_target0 * t_off;
    let speed0 = spec.v_target0;
    let pkg = DecisionPackage {
        mode: if side >= 0.0 { PitMode::PitLeft } else { PitMode::PitRight },
        road: road.clone(),
        obstacles: spec
            .obstacles
            .iter()
            .map(|o| PredictedDisc { center: o.position, velocity: o.velocity, radius: o.radius })
            .collect(),
        terminal_set: TerminalSet {
            station_range: [0.0, road.length],
            lateral_range: [-(road.half_width - 0.5), road.half_width - 0.5],
            heading_center: wrap_to_pi(road.heading_at(s_term) + std::f64::consts::PI),
            heading_halfwidth: 0.5,
            speed_cap: 12.0f64.max(speed0),
        },
        force_corridor: ForceCorridor { dt: CONTROL_DT, boxes },
        bullet_envelope: BulletEnvelope::standard(preset.bullet.length, -side * 0.37),
        contact_window: [w0, w1],
        post_safety: PostSafety { d_safe: 0.5, max_yaw_rate: 2.5 },
    };
    pkg.validate().expect("static package must be structurally valid");
    pkg
}

/// Shadow-pursuit fallback when no commitment is active: steer toward a
/// point behind the target and match its speed minus a margin.
fn fallback_pursuit(world: &WorldState, preset: &VehiclePreset) -> BulletInput {
    let bp = &preset.bullet;
    let t = &world.target;
    let b = &world.bullet;
    let dir = Rot2::new(t.psi).apply([1.0, 0.0]);
    let aim = [t.x - 10.0 * dir[0], t.y - 10.0 * dir[1]];
    let heading_des = (aim[1] - b.y).atan2(aim[0] - b.x);
    let err = wrap_to_pi(heading_des - b.psi);
    let delta = (2.2 * err).clamp(bp.delta_bounds[0], bp.delta_bounds[1]);
    let v_des = t.vx.hypot(t.vy) - 1.0;
    let v_b = b.vx.hypot(b.vy);
    let torque = (400.0 * (v_des - v_b)).clamp(bp.t_bounds[0], bp.t_bounds[1]);
    BulletInput { delta_f: delta, t_r: torque }
}

/// Gentle brake applied if a tracking solve fails outright.
fn brake_input(preset: &VehiclePreset) -> BulletInput {
    BulletInput { delta_f: 0.0, t_r: 0.3 * preset.bullet.t_bounds[0] }
}

/// Largest corner-to-panel gap at which the strike phase may engage. Below
/// this the committed pulse lands on metal; any farther and the pulse would
/// burn on air, so the executive keeps chasing and lets the next replan
/// reschedule the window.
const PIT_ENTRY_GAP: f64 = 0.30;

/// Signed gap from the bullet's striking corner to the target's panel plane
/// along the outward panel normal (negative means pressed through).
fn panel_gap(world: &WorldState, preset: &VehiclePreset, side: f64) -> f64 {
    let t = &world.target;
    let b = &world.bullet;
    let panel = Rot2::new(t.psi).apply(nominal_lever(&preset.target, side));
    let corner = Rot2::new(b.psi).apply([0.5 * preset.bullet.length, -side * 0.5 * preset.bullet.width]);
    let dx = b.x + corner[0] - (t.x + panel[0]);
    let dy = b.y + corner[1] - (t.y + panel[1]);
    side * (-t.psi.sin() * dx + t.psi.cos() * dy)
}

struct ActivePackage {
    pkg: DecisionPackage,
    t0_step: usize,
    side: f64,
    pursuit: MpcProblem,
    coupled: Option<MpcProblem>,
}

/// Run one full closed-loop episode. Deterministic: the same scenario,
/// models and configuration always produce the identical record; `seed` is
/// recorded for provenance but the loop itself draws no randomness.
pub fn closed_loop(
    spec: &ScenarioSpec,
    models: &ControlModels,
    cfg: &ExecConfig,
    variant: ControllerVariant,
    seed: u64,
) -> RunRecord {
    let preset = VehiclePreset::by_id(spec.preset);
    let env = PlanEnv::from_scenario(spec);
    let dt = CONTROL_DT;
    let n_max = (cfg.t_max / dt).round() as usize;
    let n_h = cfg.mpc.horizon_steps;
    let mut world = initial_world(spec, &preset);

    let mut rec = RunRecord {
        schema_version: RUN_SCHEMA_VERSION,
        scenario: spec.clone(),
        seed,
        variant,
        dt,
        states: vec![world],
        inputs: Vec::new(),
        planned_force: Vec::new(),
        oracle_force: Vec::new(),
        phases: Vec::new(),
        plan_ms: Vec::new(),
        ctrl_ms: Vec::new(),
        packages: Vec::new(),
        plant_failure: None,
    };

    let mut active: Option<ActivePackage> = None;
    let mut phase = Phase::Chasing;
    let mut prev_input = BulletInput::default();
    let mut prev_force = ContactForce::default();
    let mut settle = 0usize;

    for step in 0..n_max {
        let t = step as f64 * dt;
        let mut plan_ms = 0.0;

        // Decision layer. The hierarchical stack replans on schedule while
        // chasing and freezes its commitment once the pit begins; the
        // baseline commits once, blind, at the start.
        match variant {
            ControllerVariant::Hierarchical => {
                if phase == Phase::Chasing && replan_schedule(t, cfg.planner.replan_period) {
                    match plan(&world, &env, &models.net, &models.norm, &cfg.planner) {
                        Ok((pkg, diag)) => {
                            plan_ms = diag.runtime_ms;
                            rec.packages.push(PackageLog { at_step: step, package: pkg.clone(), diagnostics: diag });
                            if pkg.mode == PitMode::Abort {
                                active = None;
                            } else {
                                let pursuit = MpcProblem::pursuit(&cfg.mpc, &preset, &pkg.road, &pkg.obstacles, spec.mu);
                                active = Some(ActivePackage {
                                    side: pkg.mode.side(),
                                    t0_step: step,
                                    pursuit,
                                    coupled: None,
                                    pkg,
                                });
                            }
                        }
                        Err(_) => active = None,
                    }
                }
            }
            ControllerVariant::MpcOnly => {
                if step == 0 {
                    let pkg = static_package(spec, &world, &preset, cfg.t_max);
                    rec.packages.push(PackageLog {
                        at_step: 0,
                        package: pkg.clone(),
                        diagnostics: PlanDiagnostics::default(),
                    });
                    let pursuit = MpcProblem::pursuit(&cfg.mpc, &preset, &pkg.road, &pkg.obstacles, spec.mu);
                    active = Some(ActivePackage { side: pkg.mode.side(), t0_step: 0, pursuit, coupled: None, pkg });
                }
            }
        }

        // Phase machine (forward only). A package exists whenever the phase
        // has advanced past chasing, because replanning stops there.
        if let Some(a) = active.as_mut() {
            let tau = (step - a.t0_step) as f64 * dt;
            match phase {
                Phase::Chasing => {
                    let in_window = tau >= a.pkg.contact_window[0] - 1e-9 && tau < a.pkg.contact_window[1] - 1e-9;
                    let rel = relative_state(&world.target, &world.bullet).in_target_frame(world.target.psi);
                    let near = world.in_contact
                        || (a.pkg.bullet_envelope.contains(&rel)
                            && panel_gap(&world, &preset, a.side) <= PIT_ENTRY_GAP);
                    if in_window && near {
                        phase = Phase::Pit;
                        if a.coupled.is_none() {
                            let mut c = MpcProblem::coupled(
                                &cfg.mpc,
                                &preset,
                                &a.pkg.road,
                                &a.pkg.obstacles,
                                spec.mu,
                                a.side,
                                &a.pkg.force_corridor,
                                &models.net,
                                &models.norm,
                            );
                            c.seed_warm_from(&a.pursuit);
                            a.coupled = Some(c);
                        }
                    }
                }
                Phase::Pit => {
                    if tau >= a.pkg.contact_window[1] - 1e-9 && !world.in_contact {
                        phase = Phase::Stabilization;
                        a.pursuit.reset_warm();
                    }
                }
                Phase::Stabilization => {}
            }
        }

        // Tracking layer.
        let (input, planned, ctrl_ms) = if let Some(a) = active.as_mut() {
            let tau = (step - a.t0_step) as f64 * dt;
            match phase {
                Phase::Chasing => {
                    let refs = generate_reference(&a.pkg, &world, tau, &preset, n_h, dt);
                    let pinned = PinnedState {
                        world: &world,
                        prev_input,
                        prev_force,
                        refs: &refs,
                        tau0: tau,
                        branch: 0.0,
                    };
                    match a.pursuit.solve_step(&pinned) {
                        Ok(sol) => (sol.input, ContactForce::default(), sol.modeled_ms),
                        Err(_) => (brake_input(&preset), ContactForce::default(), 0.0),
                    }
                }
                Phase::Pit => {
                    let refs = generate_reference(&a.pkg, &world, tau, &preset, n_h, dt);
                    // Unwrapped reversal goal on the branch nearest a half
                    // turn from the target's current heading.
                    let goal0 = world.target.psi + a.side * std::f64::consts::PI;
                    let branch = goal0 + wrap_to_pi(a.pkg.terminal_set.heading_center - goal0);
                    let coupled = a.coupled.as_mut().expect("coupled tracker built at pit entry");
                    let pinned = PinnedState {
                        world: &world,
                        prev_input,
                        prev_force,
                        refs: &refs,
                        tau0: tau,
                        branch,
                    };
                    match coupled.solve_step(&pinned) {
                        Ok(sol) => (sol.input, sol.planned_force, sol.modeled_ms),
                        Err(_) => (brake_input(&preset), ContactForce::default(), 0.0),
                    }
                }
                Phase::Stabilization => {
                    let refs = retreat_reference(&a.pkg.road, &world, a.side, n_h, dt);
                    let pinned = PinnedState {
                        world: &world,
                        prev_input,
                        prev_force,
                        refs: &refs,
                        tau0: tau,
                        branch: 0.0,
                    };
                    match a.pursuit.solve_step(&pinned) {
                        Ok(sol) => (sol.input, ContactForce::default(), sol.modeled_ms),
                        Err(_) => (brake_input(&preset), ContactForce::default(), 0.0),
                    }
                }
            }
        } else {
            (fallback_pursuit(&world, &preset), ContactForce::default(), 0.0)
        };

        // Plant.
        rec.inputs.push(input);
        rec.planned_force.push(planned);
        rec.phases.push(phase);
        rec.plan_ms.push(plan_ms);
        rec.ctrl_ms.push(ctrl_ms);
        match oracle_step(&world, &input, &TargetInput::default(), spec.mu, dt, &preset.target, &preset.bullet, &preset.contact) {
            Ok((w2, info)) => {
                world = w2;
                prev_force = info.mean_force;
                rec.oracle_force.push(info.mean_force);
                rec.states.push(world);
            }
            Err(e) => {
                rec.oracle_force.push(ContactForce::default());
                rec.plant_failure = Some(e.to_string());
                break;
            }
        }
        prev_input = input;

        // Early termination: settled reversal, deep road departure, or an
        // obstacle strike. The judge re-derives the verdict from the record;
        // stopping here just avoids simulating a decided episode.
        let (s_t, _) = env.road.station_of([world.target.x, world.target.y]);
        let goal = env.road.heading_at(s_t) + std::f64::consts::PI;
        let settled = wrap_to_pi(world.target.psi - goal).abs() <= cfg.planner.eps_psi
            && world.target.psi_dot.abs() <= cfg.settle_yaw
            && !world.in_contact;
        settle = if settled { settle + 1 } else { 0 };
        if settle >= cfg.settle_hold_steps {
            break;
        }
        let off_road = env.road.boundary_margin([world.target.x, world.target.y]) < -0.3
            || env.road.boundary_margin([world.bullet.x, world.bullet.y]) < -0.3;
        let struck = env.obstacles.iter().any(|o| {
            let c = o.at_time(world.t);
            (world.target.x - c[0]).hypot(world.target.y - c[1]) < o.radius
        });
        if off_road || struck {
            break;
        }
    }
    rec
}
