//! Candidate enumeration, feasibility screening, and package assembly.
//!
//! A candidate is a (panel, pulse) pair. Feasibility is three ordered
//! clauses: (i) can the bullet physically reach the grazing strike pose by
//! the pulse onset, (ii) does the virtually spun target stay on the road and
//! clear of obstacles, (iii) does the rollout end inside the reversed
//! terminal set. The best feasible candidate by score is refined and packaged
//! into the corridor/window/terminal contract the controller executes; if no
//! candidate survives, the planner issues an explicit abort package.

use crate::dynamics::{TargetState, WorldState, CONTROL_DT};
use crate::math::{wrap_to_pi, Obb, Rot2};
use crate::optim::modeled_ms;
use crate::surrogate::{DenseNet, Normalization};

use super::cost::{score_candidate, TerminalObjective};
use super::rollout::{refine_pulse, virtual_rollout, RefineContext};
use super::{
    BulletEnvelope, DecisionPackage, ForceBox, ForceCorridor, PitMode, PlanDiagnostics, PlanEnv, PlannerConfig,
    PlannerError, PostSafety, PredictedDisc, PulseTemplate, TerminalSet, VirtualInteraction,
};

/// Gravitational acceleration for friction-limited reachability envelopes.
const G_ACC: f64 = 9.81;
/// Longitudinal slack of the reachability window (meters): tolerance for the
/// closed-form envelope ignoring tire and driveline transients.
const LON_SLACK: f64 = 1.5;
/// Base lateral slack (meters) on top of the friction-limited sweep.
const LAT_SLACK: f64 = 0.3;
/// Base heading slack (radians) on top of the yaw-rate-limited sweep.
const HEADING_SLACK: f64 = 0.2;
/// Fraction of the adhesion budget assumed available for lateral repositioning.
const LAT_ACCEL_FRACTION: f64 = 0.6;
/// Hard floor on the rolled target's corner distance to the road boundary.
const BOUNDARY_HARD_FLOOR: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityCause {
    /// The bullet cannot reach the strike pose by the pulse onset.
    ChasingReachability,
    /// The spun target would leave the drivable band.
    Boundary,
    /// The spun target would strike an obstacle.
    Obstacle,
    /// The rollout does not end inside the reversed terminal set.
    TerminalSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible(FeasibilityCause),
}

/// Short-horizon target pose prediction for the reachability clause:
/// constant world velocity, constant yaw rate.
pub(crate) fn predict_target_pose(x: &TargetState, t: f64) -> ([f64; 2], f64) {
    let v = Rot2::new(x.psi).apply([x.vx, x.vy]);
    ([x.x + v[0] * t, x.y + v[1] * t], x.psi + x.psi_dot * t)
}

/// Bullet center pose required for a grazing first touch on the given panel
/// at time `t`: the striking front corner placed on the panel's nominal
/// contact point with the bullet parallel to the target.
fn grazing_pose(side: f64, world: &WorldState, env: &PlanEnv, t: f64) -> ([f64; 2], f64) {
    let tp = &env.preset.target;
    let bp = &env.preset.bullet;
    let (pos, psi_t) = predict_target_pose(&world.target, t);
    let lever = crate::dynamics::nominal_lever(tp, side);
    let rot_t = Rot2::new(psi_t);
    let panel = rot_t.apply(lever);
    let panel_pt = [pos[0] + panel[0], pos[1] + panel[1]];
    // Striking corner in the bullet's frame: right-front for the target's
    // left panel and vice versa.
    let corner = Rot2::new(psi_t).apply([0.5 * bp.length, -side * 0.5 * bp.width]);
    ([panel_pt[0] - corner[0], panel_pt[1] - corner[1]], psi_t)
}

/// Clause (i): closed-form check that the bullet can move from its current
/// pose to the grazing strike pose within `onset` seconds, given its drive
/// and brake authority and a friction-limited lateral/yaw budget.
pub(crate) fn check_reachability(side: f64, onset: f64, world: &WorldState, env: &PlanEnv, cfg: &PlannerConfig) -> bool {
    let _ = cfg;
    let bp = &env.preset.bullet;
    let b = &world.bullet;
    let (c_req, psi_req) = grazing_pose(side, world, env, onset);
    let delta = Rot2::new(b.psi).apply_inv([c_req[0] - b.x, c_req[1] - b.y]);
    let (d_par, d_perp) = (delta[0], delta[1]);

    let t = onset;
    let v0 = b.vx;
    let a_acc = bp.eta_d * bp.i_g * bp.t_bounds[1] / (bp.r_w * bp.m);
    let a_brk = (-bp.eta_d * bp.i_g * bp.t_bounds[0] / (bp.r_w * bp.m)).min(env.mu * G_ACC);
    let lon_lo = v0 * t - 0.5 * a_brk * t * t - LON_SLACK;
    let lon_hi = v0 * t + 0.5 * a_acc * t * t + LON_SLACK;
    if d_par < lon_lo || d_par > lon_hi {
        return false;
    }

    let lat_cap = 0.5 * (LAT_ACCEL_FRACTION * env.mu * G_ACC) * t * t + LAT_SLACK;
    if d_perp.abs() > lat_cap {
        return false;
    }

    let rate_cap = 0.8 * env.mu * G_ACC / v0.max(3.0);
    wrap_to_pi(psi_req - b.psi).abs() <= rate_cap * t + HEADING_SLACK
}

/// Clauses (ii) and (iii) on a rolled trajectory.
fn check_trajectory(
    traj: &[TargetState],
    world: &WorldState,
    env: &PlanEnv,
    discs: &[PredictedDisc],
    cfg: &PlannerConfig,
) -> Feasibility {
    let tp = &env.preset.target;
    for (k, x) in traj.iter().enumerate() {
        let obb = Obb { cx: x.x, cy: x.y, heading: x.psi, length: tp.length, width: tp.width };
        for corner in obb.corners() {
            if env.road.boundary_margin(corner) < BOUNDARY_HARD_FLOOR {
                return Feasibility::Infeasible(FeasibilityCause::Boundary);
            }
        }
        let tau = k as f64 * CONTROL_DT;
        for d in discs {
            if obb.signed_distance(d.at(tau)) - d.radius < cfg.d_safe {
                return Feasibility::Infeasible(FeasibilityCause::Obstacle);
            }
        }
    }

    let last = traj.last().expect("trajectory must be non-empty");
    let terminal = candidate_terminal_set(last, world, env, cfg);
    if !terminal.contains(&env.road, last) || last.psi_dot.abs() > cfg.max_post_yaw_rate {
        return Feasibility::Infeasible(FeasibilityCause::TerminalSet);
    }
    Feasibility::Feasible
}

/// Reversed heading goal evaluated at a trajectory's terminal station.
fn reversed_heading(env: &PlanEnv, p: [f64; 2]) -> f64 {
    let (s, _) = env.road.station_of(p);
    wrap_to_pi(env.road.heading_at(s) + std::f64::consts::PI)
}

/// Terminal set for a candidate whose rollout ends at `last`: reversed
/// heading cone at the terminal station, the full drivable band minus the
/// safety margin, and a speed cap no tighter than the initial speed.
fn candidate_terminal_set(last: &TargetState, world: &WorldState, env: &PlanEnv, cfg: &PlannerConfig) -> TerminalSet {
    let speed0 = world.target.vx.hypot(world.target.vy);
    TerminalSet {
        station_range: [0.0, env.road.length],
        lateral_range: [-(env.road.half_width - cfg.d_safe), env.road.half_width - cfg.d_safe],
        heading_center: reversed_heading(env, [last.x, last.y]),
        heading_halfwidth: cfg.eps_psi,
        speed_cap: cfg.terminal_speed_cap.max(speed0),
    }
}

/// Full feasibility check of one candidate, clauses in order.
pub fn check_feasibility(
    mode: PitMode,
    interaction: &VirtualInteraction,
    traj: &[TargetState],
    world: &WorldState,
    env: &PlanEnv,
    cfg: &PlannerConfig,
) -> Feasibility {
    if mode == PitMode::Abort {
        return Feasibility::Feasible;
    }
    if !check_reachability(mode.side(), interaction.pulse.onset, world, env, cfg) {
        return Feasibility::Infeasible(FeasibilityCause::ChasingReachability);
    }
    let discs = predicted_discs(world, env);
    check_trajectory(traj, world, env, &discs, cfg)
}

fn predicted_discs(world: &WorldState, env: &PlanEnv) -> Vec<PredictedDisc> {
    env.obstacles
        .iter()
        .map(|o| PredictedDisc { center: o.at_time(world.t), velocity: o.velocity, radius: o.radius })
        .collect()
}

/// Corridor used while scoring candidates: the full physical envelope (any
/// admissible pulse is deep inside it, so the deviation term only bites if
/// refinement drifts toward the caps).
fn scoring_corridor(env: &PlanEnv, cfg: &PlannerConfig, n: usize) -> ForceCorridor {
    let cap = cfg.max_contact_accel * env.preset.target.m;
    let ft_cap = env.preset.contact.mu_c * cap;
    ForceCorridor {
        dt: CONTROL_DT,
        boxes: vec![ForceBox { fn_min: 0.0, fn_max: cap, ft_min: -ft_cap, ft_max: ft_cap }; n],
    }
}

/// Corridor handed to the controller: per-step boxes bracketing the chosen
/// pulse (+-30% on the normal force, a friction-scaled band around the
/// tangential force), exactly zero outside the pulse's support.
fn commitment_corridor(vi: &VirtualInteraction, env: &PlanEnv) -> ForceCorridor {
    let mu_c = env.preset.contact.mu_c;
    let boxes = vi
        .forces
        .iter()
        .map(|f| {
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
    ForceCorridor { dt: vi.dt, boxes }
}

fn snap_to_grid(t: f64) -> f64 {
    (t / CONTROL_DT).round() * CONTROL_DT
}

struct Chosen {
    mode: PitMode,
    interaction: VirtualInteraction,
    traj: Vec<TargetState>,
    score: f64,
    psi_rev: f64,
}

/// Plan one decision package from the current world state. Deterministic:
/// same inputs, same package. Returns an abort package (empty commitment)
/// when no candidate passes feasibility.
pub fn plan(
    world: &WorldState,
    env: &PlanEnv,
    net: &DenseNet,
    norm: &Normalization,
    cfg: &PlannerConfig,
) -> Result<(DecisionPackage, PlanDiagnostics), PlannerError> {
    cfg.validate()?;
    let tp = &env.preset.target;
    let n = cfg.n_steps();
    let dt = CONTROL_DT;
    let circ = 0.5 * tp.length.hypot(tp.width);
    let discs = predicted_discs(world, env);
    let corridor_env = scoring_corridor(env, cfg, n);
    let macs: usize = {
        let dims = net.spec.layer_dims();
        (0..net.spec.n_layers()).map(|l| dims[l] * dims[l + 1]).sum()
    };
    let rollout_flops = (n * (2 * macs + 80)) as f64;

    let mut diag = PlanDiagnostics::default();
    let mut work_flops = 0.0;
    let mut best: Option<(Chosen, usize)> = None;
    let mut index = 0usize;
    let block = cfg.accel_grid.len() * cfg.duration_grid.len() * cfg.ratio_grid.len();

    for mode in [PitMode::PitLeft, PitMode::PitRight] {
        let side = mode.side();
        for &onset in &cfg.onset_grid {
            if !check_reachability(side, onset, world, env, cfg) {
                diag.candidates_evaluated += block;
                diag.infeasible_chasing += block;
                index += block;
                continue;
            }
            for &accel in &cfg.accel_grid {
                for &duration in &cfg.duration_grid {
                    for &ratio in &cfg.ratio_grid {
                        let this_index = index;
                        index += 1;
                        diag.candidates_evaluated += 1;
                        let pulse = PulseTemplate {
                            amplitude: accel * tp.m,
                            duration,
                            onset,
                            tangential_ratio: side * ratio,
                        };
                        let vi = VirtualInteraction::from_pulse(pulse, n, dt);
                        work_flops += rollout_flops;
                        let traj = match virtual_rollout(net, norm, &world.target, &vi, side) {
                            Ok(t) => t,
                            Err(_) => {
                                diag.rollout_failures += 1;
                                continue;
                            }
                        };
                        let last = traj.last().unwrap();
                        if !(last.psi.is_finite() && last.x.is_finite() && last.y.is_finite()) {
                            diag.rollout_failures += 1;
                            continue;
                        }
                        match check_trajectory(&traj, world, env, &discs, cfg) {
                            Feasibility::Infeasible(FeasibilityCause::Boundary) => {
                                diag.infeasible_boundary += 1;
                                continue;
                            }
                            Feasibility::Infeasible(FeasibilityCause::Obstacle) => {
                                diag.infeasible_obstacle += 1;
                                continue;
                            }
                            Feasibility::Infeasible(_) => {
                                diag.infeasible_terminal += 1;
                                continue;
                            }
                            Feasibility::Feasible => {}
                        }
                        let psi_rev = reversed_heading(env, [last.x, last.y]);
                        let obj = TerminalObjective { psi_rev, w_psi: cfg.w_psi, w_v: cfg.w_v, w_c: cfg.w_c };
                        let score = score_candidate(
                            &traj, &vi.forces, &pulse, &corridor_env, &obj, &env.road, &discs, circ, dt,
                            cfg.lambda_t,
                        );
                        if !score.is_finite() {
                            diag.rollout_failures += 1;
                            continue;
                        }
                        let better = match &best {
                            None => true,
                            Some((b, _)) => score < b.score,
                        };
                        if better {
                            best = Some((
                                Chosen { mode, interaction: vi, traj, score, psi_rev },
                                this_index,
                            ));
                        }
                    }
                }
            }
        }
    }

    let Some((mut chosen, _)) = best else {
        diag.runtime_ms = modeled_ms(work_flops);
        let pkg = abort_package(world, env, cfg, discs, n);
        pkg.validate().expect("abort package must be structurally valid");
        return Ok((pkg, diag));
    };

    // Local refinement of the winning pulse, guarded so the commitment never
    // scores worse than the grid winner on the exact (hard-sampled) metric.
    if cfg.refine_iters > 0 {
        let side = chosen.mode.side();
        let last_psi = chosen.traj.last().unwrap().psi;
        let branch = chosen.psi_rev
            + 2.0 * std::f64::consts::PI * ((last_psi - chosen.psi_rev) / (2.0 * std::f64::consts::PI)).round();
        let ctx = RefineContext {
            net,
            norm,
            x0: &world.target,
            side,
            target_mass: tp.m,
            psi_rev_branch: branch,
            road: &env.road,
            discs: &discs,
            circumradius: circ,
        };
        if let Ok(out) = refine_pulse(&ctx, cfg, &chosen.interaction.pulse) {
            work_flops += (out.n_value_evals as f64 + 3.0 * out.n_grad_evals as f64) * out.flops_per_eval as f64;
            let vi_r = VirtualInteraction::from_pulse(out.pulse, n, dt);
            work_flops += rollout_flops;
            if let Ok(traj_r) = virtual_rollout(net, norm, &world.target, &vi_r, side) {
                let last_r = traj_r.last().unwrap();
                if last_r.psi.is_finite() && last_r.x.is_finite() && last_r.y.is_finite() {
                    let psi_rev_r = reversed_heading(env, [last_r.x, last_r.y]);
                    let obj_r = TerminalObjective { psi_rev: psi_rev_r, w_psi: cfg.w_psi, w_v: cfg.w_v, w_c: cfg.w_c };
                    let score_r = score_candidate(
                        &traj_r, &vi_r.forces, &out.pulse, &corridor_env, &obj_r, &env.road, &discs, circ, dt,
                        cfg.lambda_t,
                    );
                    let feas = check_feasibility(chosen.mode, &vi_r, &traj_r, world, env, cfg);
                    if score_r.is_finite() && score_r < chosen.score && feas == Feasibility::Feasible {
                        chosen = Chosen {
                            mode: chosen.mode,
                            interaction: vi_r,
                            traj: traj_r,
                            score: score_r,
                            psi_rev: psi_rev_r,
                        };
                    }
                }
            }
        }
    }

    diag.chosen_cost = Some(chosen.score);
    diag.runtime_ms = modeled_ms(work_flops);

    let side = chosen.mode.side();
    let pulse = chosen.interaction.pulse;
    let w0 = snap_to_grid((pulse.onset - 0.1).max(0.0));
    let w1 = snap_to_grid((pulse.end() + 0.1).min(cfg.horizon));
    let last = chosen.traj.last().unwrap();
    let terminal_set = TerminalSet {
        heading_center: chosen.psi_rev,
        ..candidate_terminal_set(last, world, env, cfg)
    };
    let pkg = DecisionPackage {
        mode: chosen.mode,
        road: env.road.clone(),
        obstacles: discs,
        terminal_set,
        force_corridor: commitment_corridor(&chosen.interaction, env),
        bullet_envelope: BulletEnvelope::standard(env.preset.bullet.length, -side * cfg.contact_angle),
        contact_window: [w0, w1],
        post_safety: PostSafety { d_safe: cfg.d_safe, max_yaw_rate: cfg.max_post_yaw_rate },
    };
    pkg.validate().expect("planner emitted an invalid package");
    Ok((pkg, diag))
}

fn abort_package(
    world: &WorldState,
    env: &PlanEnv,
    cfg: &PlannerConfig,
    discs: Vec<PredictedDisc>,
    n: usize,
) -> DecisionPackage {
    let (s_now, _) = env.road.station_of([world.target.x, world.target.y]);
    let speed0 = world.target.vx.hypot(world.target.vy);
    DecisionPackage {
        mode: PitMode::Abort,
        road: env.road.clone(),
        obstacles: discs,
        terminal_set: TerminalSet {
            station_range: [0.0, env.road.length],
            lateral_range: [-(env.road.half_width - cfg.d_safe), env.road.half_width - cfg.d_safe],
            heading_center: wrap_to_pi(env.road.heading_at(s_now) + std::f64::consts::PI),
            heading_halfwidth: cfg.eps_psi,
            speed_cap: cfg.terminal_speed_cap.max(speed0),
        },
        force_corridor: ForceCorridor { dt: CONTROL_DT, boxes: vec![ForceBox::ZERO; n] },
        bullet_envelope: BulletEnvelope::standard(env.preset.bullet.length, 0.0),
        contact_window: [0.0, 0.0],
        post_safety: PostSafety { d_safe: cfg.d_safe, max_yaw_rate: cfg.max_post_yaw_rate },
    }
}
