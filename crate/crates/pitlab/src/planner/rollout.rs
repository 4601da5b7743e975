//! Virtual rollouts and first-order pulse refinement.
//!
//! Grid candidates are rolled with the exact discrete surrogate
//! ([`virtual_rollout`]). The winning candidate is then polished by gradient
//! descent over the four pulse parameters; for that the whole rollout-and-
//! score computation is re-expressed on the reverse-mode tape, with one
//! smoothing: the pulse's hard support `[onset, onset + duration]` becomes a
//! steep sigmoid gate so the objective stays differentiable in onset and
//! duration. The caller re-scores the refined pulse with hard sampling and
//! keeps the grid winner unless the refinement genuinely improved it.

use std::sync::Arc;

use crate::dynamics::TargetState;
use crate::optim::{solve, BoxBounds, CompiledProblem, SolveConfig, Tape, Var};
use crate::scenario::RoadSpec;
use crate::surrogate::{rollout_states, DenseNet, Normalization, Predictor, SurrogateError, FORCE_SCALE};

use super::cost::{CLEARANCE_COMFORT_M, CLEARANCE_WEIGHT, TIME_PREFERENCE_WEIGHT};
use super::{PlannerConfig, PlannerError, PredictedDisc, PulseTemplate, VirtualInteraction};

/// Scale of the amplitude decision variable: peak specific force in units of
/// `ACC_NORM` m/s^2, so all four refinement variables are order one.
pub(crate) const ACC_NORM: f64 = 10.0;
/// Slope of the sigmoid gates standing in for the pulse's hard support.
const WINDOW_SHARPNESS: f64 = 60.0;
/// Regularizer inside smoothed distances; matches the scalar scorer.
const SMOOTH_EPS: f64 = 1e-9;

/// Roll the surrogate over a sampled interaction; `forces.len() + 1` states.
pub fn virtual_rollout(
    net: &dyn Predictor,
    norm: &Normalization,
    x0: &TargetState,
    vi: &VirtualInteraction,
    side: f64,
) -> Result<Vec<TargetState>, SurrogateError> {
    rollout_states(net, norm, x0, &vi.forces, side, vi.dt)
}

/// Everything the refinement tape needs besides the pulse itself.
pub(crate) struct RefineContext<'a> {
    pub net: &'a DenseNet,
    pub norm: &'a Normalization,
    pub x0: &'a TargetState,
    /// Panel sign, +1 left / -1 right.
    pub side: f64,
    pub target_mass: f64,
    /// Reversed-heading goal, unwrapped onto the branch of the grid
    /// winner's terminal heading so the tape needs no angle wrapping.
    pub psi_rev_branch: f64,
    pub road: &'a RoadSpec,
    pub discs: &'a [PredictedDisc],
    pub circumradius: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct RefineOutcome {
    pub pulse: PulseTemplate,
    /// Tape objective at the returned pulse (smoothed-support score).
    #[cfg_attr(not(test), allow(dead_code))]
    pub cost: f64,
    pub n_value_evals: u64,
    pub n_grad_evals: u64,
    pub flops_per_eval: u64,
}

/// Rolled target state as tape variables.
pub(crate) struct TapeState<'t> {
    pub vx: Var<'t>,
    pub vy: Var<'t>,
    pub psi: Var<'t>,
    pub psi_dot: Var<'t>,
    pub phi_dot: Var<'t>,
    pub phi: Var<'t>,
    pub x: Var<'t>,
    pub y: Var<'t>,
}

pub(crate) fn add_c<'t>(v: Var<'t>, c: f64) -> Var<'t> {
    v.mul_add_c(1.0, c)
}

/// `sigmoid(k * v)` built from tanh so large arguments saturate cleanly.
fn sigmoid_k<'t>(v: Var<'t>, k: f64) -> Var<'t> {
    v.mul_add_c(0.5 * k, 0.0).tanh().mul_add_c(0.5, 0.5)
}

/// `min(a, b) = a - max0(a - b)`.
fn tape_min<'t>(a: Var<'t>, b: Var<'t>) -> Var<'t> {
    a - (a - b).max0()
}

/// One surrogate step on the tape, mirroring `predict_step_side`: mirror-odd
/// features and increments are sign-flipped through the normalization
/// coefficients, heading and position advance kinematically, and the
/// network's output supplies the canonical residuals.
#[allow(clippy::too_many_arguments)]
pub(crate) fn tape_pico_step<'t>(
    tape: &'t Tape,
    wtab: u32,
    net: &DenseNet,
    norm: &Normalization,
    st: &TapeState<'t>,
    f_n: Var<'t>,
    f_t: Var<'t>,
    prev_n: Var<'t>,
    prev_t: Var<'t>,
    side: f64,
    dt: f64,
) -> TapeState<'t> {
    let inv_f = 1.0 / FORCE_SCALE;
    // Mirror-odd canonical state dimensions: vy, psi_dot, phi_dot, phi.
    let state_flip = [1.0, side, 1.0, side, side, side, 1.0, 1.0];
    let raw = [Some(st.vx), Some(st.vy), None, Some(st.psi_dot), Some(st.phi_dot), Some(st.phi), None, None];
    let mut feats: Vec<Var<'t>> = Vec::with_capacity(12);
    for i in 0..8 {
        let mean = norm.state_mean[i];
        let std = norm.state_std[i];
        match raw[i] {
            Some(v) => feats.push(v.mul_add_c(state_flip[i] / std, -mean / std)),
            None => feats.push(tape.constant(-mean / std)),
        }
    }
    feats.push(f_n.mul_add_c(inv_f, 0.0));
    feats.push(f_t.mul_add_c(side * inv_f, 0.0));
    feats.push(prev_n.mul_add_c(inv_f, 0.0));
    feats.push(prev_t.mul_add_c(side * inv_f, 0.0));

    let dims = net.spec.layer_dims();
    let n_layers = net.spec.n_layers();
    let mut a = feats;
    let mut off = 0;
    for l in 0..n_layers {
        let (d_in, d_out) = (dims[l], dims[l + 1]);
        let biases = &net.weights[off + d_in * d_out..off + d_in * d_out + d_out];
        a = tape.affine_layer(wtab, off, &a, biases);
        if l + 1 < n_layers {
            a = a.into_iter().map(|v| v.tanh()).collect();
        }
        off += d_in * d_out + d_out;
    }

    // Mirror-odd increment dimensions: all but vx and the longitudinal
    // position residual.
    let out_flip = [1.0, side, side, side, side, side, 1.0, side];
    let d: Vec<Var<'t>> = (0..8)
        .map(|i| a[i].mul_add_c(out_flip[i] * norm.delta_std[i], out_flip[i] * norm.delta_mean[i]))
        .collect();

    let sin_psi = st.psi.sin();
    let cos_psi = st.psi.cos();
    let xdot = st.vx * cos_psi - st.vy * sin_psi;
    let ydot = st.vx * sin_psi + st.vy * cos_psi;
    let res_x = d[6] * cos_psi - d[7] * sin_psi;
    let res_y = d[6] * sin_psi + d[7] * cos_psi;

    TapeState {
        vx: st.vx + d[0],
        vy: st.vy + d[1],
        psi: st.psi + st.psi_dot.mul_add_c(dt, 0.0) + d[2],
        psi_dot: st.psi_dot + d[3],
        phi_dot: st.phi_dot + d[4],
        phi: st.phi + d[5],
        x: st.x + xdot.mul_add_c(dt, 0.0) + res_x,
        y: st.y + ydot.mul_add_c(dt, 0.0) + res_y,
    }
}

/// Clearance of one rolled position on the tape: the closed-form lateral
/// offset against the road band, then the minimum against each predicted
/// obstacle disc. Mirrors `cost::disc_clearance`.
fn tape_clearance<'t>(
    road: &RoadSpec,
    discs: &[PredictedDisc],
    x: Var<'t>,
    y: Var<'t>,
    tau: f64,
    circumradius: f64,
) -> Var<'t> {
    let kappa = road.topology.curvature();
    let lat = if kappa == 0.0 {
        y
    } else {
        let r = 1.0 / kappa;
        let dy = add_c(y, -r);
        let dist = add_c(x.square() + dy.square(), SMOOTH_EPS).sqrt();
        dist.mul_add_c(-kappa.signum(), kappa.signum() * r.abs())
    };
    let lat_abs = add_c(lat.square(), SMOOTH_EPS).sqrt();
    let mut margin = lat_abs.mul_add_c(-1.0, road.half_width - circumradius);
    for d in discs {
        let c = d.at(tau);
        let dx = add_c(x, -c[0]);
        let dy = add_c(y, -c[1]);
        let gap = add_c(dx.square() + dy.square(), SMOOTH_EPS).sqrt().mul_add_c(1.0, -(d.radius + circumradius));
        margin = tape_min(margin, gap);
    }
    margin
}

/// Compile the full rollout-and-score objective over the four normalized
/// pulse parameters `[amplitude / (ACC_NORM * m), duration, onset, ratio]`.
pub(crate) fn build_refine_problem(ctx: &RefineContext<'_>, cfg: &PlannerConfig, z0: &[f64; 4]) -> CompiledProblem {
    let n = cfg.n_steps();
    let dt = crate::dynamics::CONTROL_DT;
    let tape = Tape::new();
    let z = tape.inputs(z0);
    let (z_amp, z_dur, z_on, z_ratio) = (z[0], z[1], z[2], z[3]);
    let wtab = tape.weights(Arc::new(ctx.net.weights.clone()));

    let amp = z_amp.mul_add_c(ACC_NORM * ctx.target_mass, 0.0);
    let mut forces: Vec<(Var<'_>, Var<'_>)> = Vec::with_capacity(n);
    for k in 0..n {
        let tau_mid = (k as f64 + 0.5) * dt;
        // s = (tau - onset) / duration, gated to [0, 1] by steep sigmoids.
        let s = (add_c(z_on.mul_add_c(-1.0, 0.0), tau_mid)) / z_dur;
        let half_sine = s.mul_add_c(std::f64::consts::PI, 0.0).sin().max0();
        let gate_lo = sigmoid_k(s, WINDOW_SHARPNESS);
        let gate_hi = sigmoid_k(s.mul_add_c(-1.0, 1.0), WINDOW_SHARPNESS);
        let f_n = amp * half_sine * gate_lo * gate_hi;
        let f_t = z_ratio * f_n;
        forces.push((f_n, f_t));
    }

    let a0 = ctx.x0;
    let mut st = TapeState {
        vx: tape.constant(a0.vx),
        vy: tape.constant(a0.vy),
        psi: tape.constant(a0.psi),
        psi_dot: tape.constant(a0.psi_dot),
        phi_dot: tape.constant(a0.phi_dot),
        phi: tape.constant(a0.phi),
        x: tape.constant(a0.x),
        y: tape.constant(a0.y),
    };
    let zero = tape.constant(0.0);
    let (mut prev_n, mut prev_t) = (zero, zero);

    let mut clearance_pen = tape.constant(0.0);
    let first = tape_clearance(ctx.road, ctx.discs, st.x, st.y, 0.0, ctx.circumradius);
    clearance_pen = clearance_pen + first.mul_add_c(-1.0, CLEARANCE_COMFORT_M).max0().square().mul_add_c(dt, 0.0);

    for (k, &(f_n, f_t)) in forces.iter().enumerate() {
        st = tape_pico_step(&tape, wtab, ctx.net, ctx.norm, &st, f_n, f_t, prev_n, prev_t, ctx.side, dt);
        prev_n = f_n;
        prev_t = f_t;
        let tau = (k + 1) as f64 * dt;
        let m = tape_clearance(ctx.road, ctx.discs, st.x, st.y, tau, ctx.circumradius);
        clearance_pen = clearance_pen + m.mul_add_c(-1.0, CLEARANCE_COMFORT_M).max0().square().mul_add_c(dt, 0.0);
    }

    let time_pref = (z_on + z_dur).mul_add_c(TIME_PREFERENCE_WEIGHT, 0.0);
    let e_psi = add_c(st.psi, -ctx.psi_rev_branch);
    let jt = e_psi.square().mul_add_c(cfg.w_psi, 0.0) + (st.vx.square() + st.vy.square()).mul_add_c(cfg.w_v, 0.0);
    let obj = time_pref + clearance_pen.mul_add_c(CLEARANCE_WEIGHT, 0.0) + jt.mul_add_c(cfg.lambda_t, 0.0);
    let out = obj.index();
    CompiledProblem::new(tape, out)
}

/// Refinement bounds around a starting pulse, in normalized coordinates.
pub(crate) fn refine_bounds(pulse0: &PulseTemplate, target_mass: f64, cfg: &PlannerConfig) -> BoxBounds {
    let z_amp0 = pulse0.amplitude / (ACC_NORM * target_mass);
    let lo = vec![
        0.6 * z_amp0,
        (pulse0.duration - 0.15).max(0.15),
        (pulse0.onset - 0.15).max(0.05),
        (pulse0.tangential_ratio - 0.25).max(-0.55),
    ];
    let hi = vec![
        cfg.max_contact_accel / ACC_NORM,
        pulse0.duration + 0.15,
        (pulse0.onset + 0.15).min(cfg.horizon - 0.2),
        (pulse0.tangential_ratio + 0.25).min(0.55),
    ];
    BoxBounds::new(lo, hi)
}

/// Polish a pulse by projected gradient descent on the tape objective.
/// Deterministic; the returned pulse is the solver's accepted iterate, which
/// never scores worse than the start point on the smoothed objective.
pub(crate) fn refine_pulse(
    ctx: &RefineContext<'_>,
    cfg: &PlannerConfig,
    pulse0: &PulseTemplate,
) -> Result<RefineOutcome, PlannerError> {
    let z0 = [
        pulse0.amplitude / (ACC_NORM * ctx.target_mass),
        pulse0.duration,
        pulse0.onset,
        pulse0.tangential_ratio,
    ];
    let mut prog = build_refine_problem(ctx, cfg, &z0);
    let flops = prog.flops_per_eval();
    let bounds = refine_bounds(pulse0, ctx.target_mass, cfg);
    let solve_cfg = SolveConfig { max_iters: cfg.refine_iters, tol_cost: 1e-10, ..SolveConfig::default() };
    let res = solve(&mut prog, &z0, &bounds, &solve_cfg)?;
    Ok(RefineOutcome {
        pulse: PulseTemplate {
            amplitude: res.x[0] * ACC_NORM * ctx.target_mass,
            duration: res.x[1],
            onset: res.x[2],
            tangential_ratio: res.x[3],
        },
        cost: res.cost,
        n_value_evals: res.n_value_evals,
        n_grad_evals: res.n_grad_evals,
        flops_per_eval: flops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::testutil::toy_spin_net;
    use crate::planner::{ForceBox, ForceCorridor};
    use crate::optim::finite_diff_gradient;
    use crate::scenario::RoadTopology;
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

    fn cruising_state() -> TargetState {
        TargetState { vx: 11.0, vy: 0.0, psi: 0.0, psi_dot: 0.0, phi_dot: 0.0, phi: 0.0, x: 40.0, y: 0.0 }
    }

    fn spin_pulse() -> PulseTemplate {
        // 16 m/s^2 peak on a 1500 kg target.
        PulseTemplate { amplitude: 2.4e4, duration: 0.5, onset: 0.4, tangential_ratio: 0.0 }
    }

    #[test]
    fn rollout_yields_horizon_plus_one_states() {
        let (net, norm) = toy_spin_net();
        let vi = VirtualInteraction::from_pulse(spin_pulse(), 40, 0.05);
        let traj = virtual_rollout(&net, &norm, &cruising_state(), &vi, 1.0).unwrap();
        assert_eq!(traj.len(), 41);
    }

    #[test]
    fn toy_net_zero_force_coast_has_closed_form_decay() {
        // With zero forces the toy net reduces to per-step geometric decay
        // of vy and psi_dot; everything else advances kinematically.
        let (net, norm) = toy_spin_net();
        let pulse = PulseTemplate { amplitude: 0.0, duration: 0.3, onset: 0.2, tangential_ratio: 0.0 };
        let vi = VirtualInteraction::from_pulse(pulse, 40, 0.05);
        let mut x0 = cruising_state();
        x0.vy = -0.8;
        x0.psi_dot = 0.9;
        let traj = virtual_rollout(&net, &norm, &x0, &vi, 1.0).unwrap();
        let last = traj.last().unwrap();
        assert_abs_diff_eq!(last.vy, -0.8 * 0.95f64.powi(40), epsilon = 1e-12);
        assert_abs_diff_eq!(last.psi_dot, 0.9 * 0.97f64.powi(40), epsilon = 1e-12);
        assert_abs_diff_eq!(last.vx, 11.0, epsilon = 1e-12);
        // Heading integrates the decaying yaw rate exactly.
        let mut psi = 0.0;
        let mut rate = 0.9;
        for _ in 0..40 {
            psi += rate * 0.05;
            rate *= 0.97;
        }
        assert_abs_diff_eq!(last.psi, psi, epsilon = 1e-12);
    }

    #[test]
    fn toy_net_spin_pulse_reverses_within_tolerance() {
        let (net, norm) = toy_spin_net();
        let vi = VirtualInteraction::from_pulse(spin_pulse(), 40, 0.05);
        let traj = virtual_rollout(&net, &norm, &cruising_state(), &vi, 1.0).unwrap();
        let last = traj.last().unwrap();
        let err = crate::math::wrap_to_pi(last.psi - std::f64::consts::PI).abs();
        assert!(err < 0.2, "toy pulse should roughly reverse the target, miss = {err:.3}");
        assert!(last.psi_dot.abs() < 2.5, "terminal spin should have decayed, got {}", last.psi_dot);
        assert!(last.vx < 11.0, "contact should bleed forward speed");
    }

    #[test]
    fn tape_objective_matches_scalar_score_modulo_window_softening() {
        let (net, norm) = toy_spin_net();
        let road = straight_road();
        let discs = vec![PredictedDisc { center: [70.0, 3.0], velocity: [0.0, 0.0], radius: 0.8 }];
        let cfg = PlannerConfig::default();
        let x0 = cruising_state();
        let pulse = spin_pulse();

        // Scalar side: hard-sampled rollout and score. The corridor is the
        // wide physical envelope, so its deviation term is exactly zero and
        // the tape may omit it.
        let vi = VirtualInteraction::from_pulse(pulse, cfg.n_steps(), 0.05);
        let traj = virtual_rollout(&net, &norm, &x0, &vi, 1.0).unwrap();
        let corridor = ForceCorridor {
            dt: 0.05,
            boxes: vec![
                ForceBox {
                    fn_min: 0.0,
                    fn_max: cfg.max_contact_accel * 1500.0,
                    ft_min: -0.6 * cfg.max_contact_accel * 1500.0,
                    ft_max: 0.6 * cfg.max_contact_accel * 1500.0,
                };
                cfg.n_steps()
            ],
        };
        let obj = super::super::cost::TerminalObjective {
            psi_rev: std::f64::consts::PI,
            w_psi: cfg.w_psi,
            w_v: cfg.w_v,
            w_c: cfg.w_c,
        };
        let circ = 2.5;
        let scalar = super::super::cost::score_candidate(
            &traj, &vi.forces, &pulse, &corridor, &obj, &road, &discs, circ, 0.05, cfg.lambda_t,
        );

        let ctx = RefineContext {
            net: &net,
            norm: &norm,
            x0: &x0,
            side: 1.0,
            target_mass: 1500.0,
            psi_rev_branch: std::f64::consts::PI,
            road: &road,
            discs: &discs,
            circumradius: circ,
        };
        let z0 = [pulse.amplitude / (ACC_NORM * 1500.0), pulse.duration, pulse.onset, pulse.tangential_ratio];
        let mut prog = build_refine_problem(&ctx, &cfg, &z0);
        let tape_cost = prog.eval(&z0);
        let tol = 0.02 * (1.0 + scalar.abs());
        assert!(
            (tape_cost - scalar).abs() < tol,
            "tape {tape_cost:.6} vs scalar {scalar:.6} beyond softening tolerance {tol:.6}"
        );
    }

    #[test]
    fn tape_gradient_matches_central_differences() {
        let (net, norm) = toy_spin_net();
        let road = straight_road();
        let discs = vec![PredictedDisc { center: [62.0, -2.0], velocity: [1.0, 0.0], radius: 0.6 }];
        let cfg = PlannerConfig::default();
        let x0 = cruising_state();
        let ctx = RefineContext {
            net: &net,
            norm: &norm,
            x0: &x0,
            side: 1.0,
            target_mass: 1500.0,
            psi_rev_branch: std::f64::consts::PI,
            road: &road,
            discs: &discs,
            circumradius: 2.5,
        };
        // Interior point away from the gate edges and the ratio bound.
        let z = [1.35, 0.48, 0.43, 0.12];
        let mut prog = build_refine_problem(&ctx, &cfg, &z);
        let (_, grad) = prog.eval_grad(&z).unwrap();
        let fd = finite_diff_gradient(|p| prog.eval(p), &z, 1e-5);
        for i in 0..4 {
            let denom = grad[i].abs().max(1e-6);
            let rel = (grad[i] - fd[i]).abs() / denom;
            assert!(rel < 1e-5, "component {i}: tape {} vs fd {} rel {rel:.2e}", grad[i], fd[i]);
        }
    }

    #[test]
    fn refinement_improves_or_preserves_the_tape_objective_within_bounds() {
        let (net, norm) = toy_spin_net();
        let road = straight_road();
        let cfg = PlannerConfig::default();
        let x0 = cruising_state();
        // Deliberately mediocre start: weak and late.
        let pulse0 = PulseTemplate { amplitude: 1.5e4, duration: 0.5, onset: 0.6, tangential_ratio: 0.0 };
        let ctx = RefineContext {
            net: &net,
            norm: &norm,
            x0: &x0,
            side: 1.0,
            target_mass: 1500.0,
            psi_rev_branch: std::f64::consts::PI,
            road: &road,
            discs: &[],
            circumradius: 2.5,
        };
        let z0 = [pulse0.amplitude / (ACC_NORM * 1500.0), pulse0.duration, pulse0.onset, pulse0.tangential_ratio];
        let mut prog = build_refine_problem(&ctx, &cfg, &z0);
        let start_cost = prog.eval(&z0);

        let out = refine_pulse(&ctx, &cfg, &pulse0).unwrap();
        assert!(out.cost <= start_cost + 1e-12, "refined {0} worse than start {start_cost}", out.cost);
        // The weak start should actually improve materially.
        assert!(out.cost < start_cost - 1e-3, "expected material improvement, got {} -> {}", start_cost, out.cost);
        // Bounds respected.
        assert!(out.pulse.amplitude >= 0.6 * pulse0.amplitude - 1e-9);
        assert!(out.pulse.amplitude <= cfg.max_contact_accel * 1500.0 + 1e-9);
        assert!((out.pulse.duration - pulse0.duration).abs() <= 0.15 + 1e-9);
        assert!((out.pulse.onset - pulse0.onset).abs() <= 0.15 + 1e-9);
        assert!((out.pulse.tangential_ratio - pulse0.tangential_ratio).abs() <= 0.25 + 1e-9);
        assert!(out.n_grad_evals > 0);
    }
}
