//! Receding-horizon trackers compiled on the reverse-mode tape.
//!
//! Two problem shapes cover the whole episode:
//!
//! * **Pursuit** — bullet chassis only, used while chasing and while
//!   disengaging. Decisions are one steering angle and one drive torque per
//!   interval; the cost tracks absolute pose/speed references and penalizes
//!   road and obstacle proximity.
//! * **Coupled** — the bullet chassis plus the fast target surrogate rolled
//!   jointly, used during the contact window. The decisions additionally
//!   include the planned contact force pair per interval, box-bounded by the
//!   package's force corridor; the cost rewards spinning the predicted
//!   target to the reversed heading while a contact-consistency term charges
//!   for any force commanded while the strike corner is geometrically
//!   separated from the panel.
//!
//! Each problem is compiled once per decision package. Per-step quantities
//! (measured states, references, obstacle predictions, road frames) enter as
//! tape inputs pinned by equal lower and upper bounds, so the projected
//! gradient solver can never move them and no recompilation is needed.
//! Decision variables are kept order-one (torque and forces are divided by
//! fixed scales) so a single solver step length suits every coordinate.

use std::sync::Arc;

use crate::dynamics::{nominal_lever, BulletInput, BulletParams, ContactForce, VehiclePreset, WorldState, CONTROL_DT};
use crate::optim::{modeled_ms, solve, BoxBounds, CompiledProblem, OptimError, SolveConfig, Tape, Var};
use crate::planner::{add_c, predict_target_pose, tape_pico_step, ForceCorridor, PredictedDisc, TapeState};
use crate::scenario::RoadSpec;
use crate::surrogate::{DenseNet, Normalization, FORCE_SCALE};

use super::reference::ReferencePlan;

/// Slip-angle speed regularization; matches the plant's bullet model.
const SLIP_V_EPS: f64 = 0.3;
/// Gravitational acceleration for static axle loads; matches the plant.
const G: f64 = 9.81;
/// Regularizer under square roots.
const SMOOTH_EPS: f64 = 1e-9;
/// Sharpness of the contact-consistency softplus (1/m). Kept moderate so the
/// force-dimension gradients stay within an order of magnitude of the
/// chassis dimensions; the shared Armijo step then serves both.
const BETA_CC: f64 = 4.0;
/// Sharpness of the road-edge hinge (1/m).
const BETA_ROAD: f64 = 4.0;
/// Sharpness of the obstacle hinge (1/m).
const BETA_OBS: f64 = 2.0;
/// Radians of front steering per unit of the steering decision variable.
/// Steering in raw radians has curvature orders of magnitude above the
/// normalized torque and force dimensions, which starves the shared
/// line-search step; this scale evens the spectrum out.
const DELTA_SCALE: f64 = 0.1;

/// Tracker tuning. Weights are grouped by the problem they apply to; `w_du`,
/// `w_road`, `w_obs` and the margins apply to both.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MpcConfig {
    /// Prediction horizon in control intervals.
    pub horizon_steps: usize,
    /// Projected-gradient iterations per control step.
    pub max_iters: usize,
    /// Pursuit: absolute position tracking.
    pub w_pos: f64,
    /// Pursuit: absolute heading tracking.
    pub w_head: f64,
    /// Speed tracking (both problems).
    pub w_speed: f64,
    /// Input-rate penalty on steering and normalized torque.
    pub w_du: f64,
    /// Coupled: bullet-minus-target position tracking.
    pub w_rel_pos: f64,
    /// Coupled: bullet absolute heading tracking.
    pub w_rel_head: f64,
    /// Coupled: pull of the planned force toward the corridor center
    /// (normalized force units; deliberately weak).
    pub w_force: f64,
    /// Coupled: charge for force commanded while geometrically separated.
    pub w_cc: f64,
    /// Coupled: terminal target-heading reversal reward.
    pub w_term: f64,
    /// Coupled: terminal target yaw-rate damping.
    pub w_term_rate: f64,
    pub w_road: f64,
    pub w_obs: f64,
    /// Distance the vehicle center must keep from the road edge (m).
    pub road_margin: f64,
    /// Extra clearance added to obstacle radii beyond the circumradius (m).
    pub obs_margin: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 20,
            max_iters: 12,
            w_pos: 1.0,
            w_head: 3.0,
            w_speed: 0.3,
            w_du: 0.5,
            w_rel_pos: 1.0,
            w_rel_head: 2.0,
            w_force: 0.5,
            w_cc: 10.0,
            w_term: 2.0,
            w_term_rate: 0.05,
            w_road: 4.0,
            w_obs: 4.0,
            road_margin: 1.2,
            obs_margin: 0.3,
        }
    }
}

/// Offsets of every block in the flat tape-input vector. Decisions come
/// first, then the pinned parameters.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    n_obs: usize,
    coupled: bool,
    o_target: usize,
    o_bullet: usize,
    o_prev_f: usize,
    o_prev_u: usize,
    o_branch: usize,
    o_ref: usize,
    o_center: usize,
    o_bframe: usize,
    o_tframe: usize,
    o_obs: usize,
    dim: usize,
}

impl Layout {
    fn new(n: usize, n_obs: usize, coupled: bool) -> Self {
        let dec = if coupled { 4 * n } else { 2 * n };
        let o_target = dec;
        let o_bullet = o_target + if coupled { 8 } else { 0 };
        let o_prev_f = o_bullet + 6;
        let o_prev_u = o_prev_f + if coupled { 2 } else { 0 };
        let o_branch = o_prev_u + 2;
        let o_ref = o_branch + usize::from(coupled);
        let o_center = o_ref + 4 * n;
        let o_bframe = o_center + if coupled { 2 * n } else { 0 };
        let o_tframe = o_bframe + 4 * n;
        let o_obs = o_tframe + if coupled { 4 * n } else { 0 };
        let dim = o_obs + 2 * n_obs * n;
        Self { n, n_obs, coupled, o_target, o_bullet, o_prev_f, o_prev_u, o_branch, o_ref, o_center, o_bframe, o_tframe, o_obs, dim }
    }

    fn delta(&self, k: usize) -> usize {
        k
    }
    fn torque(&self, k: usize) -> usize {
        self.n + k
    }
    fn f_n(&self, k: usize) -> usize {
        2 * self.n + k
    }
    fn f_t(&self, k: usize) -> usize {
        3 * self.n + k
    }
    fn dec_len(&self) -> usize {
        if self.coupled { 4 * self.n } else { 2 * self.n }
    }
    /// Reference tuple `[a, b, psi, v]` for step `k`.
    fn rref(&self, k: usize, j: usize) -> usize {
        self.o_ref + 4 * k + j
    }
    /// Normalized corridor center `[fn, ft]` for step `k` (coupled).
    fn center(&self, k: usize, j: usize) -> usize {
        self.o_center + 2 * k + j
    }
    /// Frozen road frame `[cx, cy, sin, cos]` at the bullet's step-`k`
    /// reference station.
    fn bframe(&self, k: usize, j: usize) -> usize {
        self.o_bframe + 4 * k + j
    }
    /// Same, at the predicted target station (coupled).
    fn tframe(&self, k: usize, j: usize) -> usize {
        self.o_tframe + 4 * k + j
    }
    fn obs(&self, j_obs: usize, k: usize, c: usize) -> usize {
        self.o_obs + 2 * (j_obs * self.n + k) + c
    }
}

/// Bullet chassis state as tape variables.
struct BulletVars<'t> {
    x: Var<'t>,
    y: Var<'t>,
    psi: Var<'t>,
    vx: Var<'t>,
    vy: Var<'t>,
    r: Var<'t>,
}

/// Contact wrench in the bullet's body frame as tape variables.
struct WrenchVars<'t> {
    fx: Var<'t>,
    fy: Var<'t>,
    mz: Var<'t>,
}

/// Chassis derivatives mirroring the plant's bullet model with two smooth
/// substitutions: the slip angle uses `atan2(vy_axle, vx + eps)` (identical
/// to the plant's form whenever `vx > 0`) and the tire adhesion clamp
/// becomes the tanh-based `sat`.
fn bullet_rhs<'t>(
    s: &BulletVars<'t>,
    delta: Var<'t>,
    sin_d: Var<'t>,
    cos_d: Var<'t>,
    f_xr: Var<'t>,
    wrench: Option<&WrenchVars<'t>>,
    mu: f64,
    p: &BulletParams,
) -> [Var<'t>; 6] {
    let l = p.lf + p.lr;
    let (fz_f, fz_r) = (p.m * G * p.lr / l, p.m * G * p.lf / l);
    let vx_eps = add_c(s.vx, SLIP_V_EPS);
    let alpha_f = (s.vy + s.r.mul_add_c(p.lf, 0.0)).atan2(vx_eps) - delta;
    let alpha_r = (s.vy - s.r.mul_add_c(p.lr, 0.0)).atan2(vx_eps);
    let f_yf = alpha_f.mul_add_c(-p.c_alpha_f, 0.0).sat(mu * fz_f);
    let f_yr = alpha_r.mul_add_c(-p.c_alpha_r, 0.0).sat(mu * fz_r);

    let sin_psi = s.psi.sin();
    let cos_psi = s.psi.cos();
    let x_dot = s.vx * cos_psi - s.vy * sin_psi;
    let y_dot = s.vx * sin_psi + s.vy * cos_psi;

    let mut fx_sum = f_xr - f_yf * sin_d;
    let mut fy_sum = f_yf * cos_d + f_yr;
    let mut mz_sum = (f_yf * cos_d).mul_add_c(p.lf, 0.0) - f_yr.mul_add_c(p.lr, 0.0);
    if let Some(w) = wrench {
        fx_sum = fx_sum + w.fx;
        fy_sum = fy_sum + w.fy;
        mz_sum = mz_sum + w.mz;
    }
    let vx_dot = fx_sum.mul_add_c(1.0 / p.m, 0.0) + s.r * s.vy;
    let vy_dot = fy_sum.mul_add_c(1.0 / p.m, 0.0) - s.r * s.vx;
    let r_dot = mz_sum.mul_add_c(1.0 / p.iz, 0.0);
    [x_dot, y_dot, s.r, vx_dot, vy_dot, r_dot]
}

fn axpy<'t>(s: &BulletVars<'t>, k: &[Var<'t>; 6], a: f64) -> BulletVars<'t> {
    BulletVars {
        x: s.x + k[0].mul_add_c(a, 0.0),
        y: s.y + k[1].mul_add_c(a, 0.0),
        psi: s.psi + k[2].mul_add_c(a, 0.0),
        vx: s.vx + k[3].mul_add_c(a, 0.0),
        vy: s.vy + k[4].mul_add_c(a, 0.0),
        r: s.r + k[5].mul_add_c(a, 0.0),
    }
}

/// One RK4 step of the smooth chassis twin with inputs and body wrench held
/// constant across the stages. The plant refreshes the contact wrench every
/// millisecond substep; holding it for a full control interval is the
/// model's one deliberate coarsening.
fn tape_bullet_step<'t>(
    s: &BulletVars<'t>,
    delta: Var<'t>,
    torque_norm: Var<'t>,
    wrench: Option<&WrenchVars<'t>>,
    mu: f64,
    p: &BulletParams,
    t_scale: f64,
    dt: f64,
) -> BulletVars<'t> {
    let sin_d = delta.sin();
    let cos_d = delta.cos();
    let f_xr = torque_norm.mul_add_c(t_scale * p.eta_d * p.i_g / p.r_w, 0.0);
    let k1 = bullet_rhs(s, delta, sin_d, cos_d, f_xr, wrench, mu, p);
    let s2 = axpy(s, &k1, 0.5 * dt);
    let k2 = bullet_rhs(&s2, delta, sin_d, cos_d, f_xr, wrench, mu, p);
    let s3 = axpy(s, &k2, 0.5 * dt);
    let k3 = bullet_rhs(&s3, delta, sin_d, cos_d, f_xr, wrench, mu, p);
    let s4 = axpy(s, &k3, dt);
    let k4 = bullet_rhs(&s4, delta, sin_d, cos_d, f_xr, wrench, mu, p);
    let comb = |i: usize| {
        let sum = k1[i] + k2[i].mul_add_c(2.0, 0.0) + k3[i].mul_add_c(2.0, 0.0) + k4[i];
        sum.mul_add_c(dt / 6.0, 0.0)
    };
    BulletVars {
        x: s.x + comb(0),
        y: s.y + comb(1),
        psi: s.psi + comb(2),
        vx: s.vx + comb(3),
        vy: s.vy + comb(4),
        r: s.r + comb(5),
    }
}

/// Plain-`f64` mirror of [`tape_bullet_step`]; used by tests to pin the tape
/// arithmetic and by anyone needing a fast scalar preview of the MPC model.
pub fn smooth_bullet_step(
    s: &crate::dynamics::BulletState,
    delta: f64,
    torque: f64,
    wrench: &crate::dynamics::BodyWrench,
    mu: f64,
    p: &BulletParams,
    dt: f64,
) -> crate::dynamics::BulletState {
    let sat = |x: f64, limit: f64| limit * (x / limit).tanh();
    let l = p.lf + p.lr;
    let (fz_f, fz_r) = (p.m * G * p.lr / l, p.m * G * p.lf / l);
    let (sin_d, cos_d) = delta.sin_cos();
    let f_xr = torque * p.eta_d * p.i_g / p.r_w;
    let rhs = |a: &[f64; 6]| -> [f64; 6] {
        let (x_, y_, psi, vx, vy, r) = (a[0], a[1], a[2], a[3], a[4], a[5]);
        let _ = (x_, y_);
        let vx_eps = vx + SLIP_V_EPS;
        let alpha_f = (vy + p.lf * r).atan2(vx_eps) - delta;
        let alpha_r = (vy - p.lr * r).atan2(vx_eps);
        let f_yf = sat(-p.c_alpha_f * alpha_f, mu * fz_f);
        let f_yr = sat(-p.c_alpha_r * alpha_r, mu * fz_r);
        let (sin_psi, cos_psi) = psi.sin_cos();
        [
            vx * cos_psi - vy * sin_psi,
            vx * sin_psi + vy * cos_psi,
            r,
            (f_xr - f_yf * sin_d + wrench.fx) / p.m + r * vy,
            (f_yf * cos_d + f_yr + wrench.fy) / p.m - r * vx,
            (p.lf * f_yf * cos_d - p.lr * f_yr + wrench.mz) / p.iz,
        ]
    };
    let a = [s.x, s.y, s.psi, s.vx, s.vy, s.r];
    let k1 = rhs(&a);
    let st = |k: &[f64; 6], h: f64| {
        let mut out = a;
        for i in 0..6 {
            out[i] += h * k[i];
        }
        out
    };
    let k2 = rhs(&st(&k1, 0.5 * dt));
    let k3 = rhs(&st(&k2, 0.5 * dt));
    let k4 = rhs(&st(&k3, dt));
    let mut out = a;
    for i in 0..6 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    crate::dynamics::BulletState::from_array(out)
}

/// Road-edge and obstacle penalties for one vehicle position at one step.
#[allow(clippy::too_many_arguments)]
fn safety_cost<'t>(
    v: &[Var<'t>],
    lay: &Layout,
    frame_at: impl Fn(usize, usize) -> usize,
    k: usize,
    x: Var<'t>,
    y: Var<'t>,
    hw_eff: f64,
    obs_radii: &[f64],
    cfg: &MpcConfig,
) -> Var<'t> {
    let cx = v[frame_at(k, 0)];
    let cy = v[frame_at(k, 1)];
    let sth = v[frame_at(k, 2)];
    let cth = v[frame_at(k, 3)];
    let lat = (y - cy) * cth - (x - cx) * sth;
    let mut pen = lat.smooth_hinge(hw_eff, BETA_ROAD).mul_add_c(cfg.w_road, 0.0)
        + lat.mul_add_c(-1.0, 0.0).smooth_hinge(hw_eff, BETA_ROAD).mul_add_c(cfg.w_road, 0.0);
    for (j, &r_keep) in obs_radii.iter().enumerate() {
        let dx = x - v[lay.obs(j, k, 0)];
        let dy = y - v[lay.obs(j, k, 1)];
        let dist = add_c(dx.square() + dy.square(), SMOOTH_EPS).sqrt();
        // Violation measure r_keep - dist, hinged at zero.
        pen = pen + dist.mul_add_c(-1.0, r_keep).smooth_hinge(0.0, BETA_OBS).mul_add_c(cfg.w_obs, 0.0);
    }
    pen
}

/// Per-step data pinned into a compiled problem before each solve.
#[derive(Debug, Clone, Copy)]
pub struct PinnedState<'a> {
    pub world: &'a WorldState,
    /// Input applied over the previous interval (rate-penalty anchor).
    pub prev_input: BulletInput,
    /// Mean oracle contact force over the previous interval; feeds the
    /// surrogate's previous-force features.
    pub prev_force: ContactForce,
    pub refs: &'a ReferencePlan,
    /// Package-relative time of the current state (s).
    pub tau0: f64,
    /// Unwrapped reversed-heading goal for the coupled terminal term.
    pub branch: f64,
}

/// Result of one receding-horizon solve.
#[derive(Debug, Clone)]
pub struct MpcSolution {
    /// First-interval input to apply.
    pub input: BulletInput,
    /// First-interval planned contact force (zero for pursuit problems).
    pub planned_force: ContactForce,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Accepted-cost trace from the solver (non-increasing).
    pub trace: Vec<f64>,
    /// Decision part of the solution, for warm-start inspection.
    pub decision: Vec<f64>,
    /// Deterministic work model: flops spent in this solve.
    pub work_flops: f64,
    /// The work model converted to milliseconds.
    pub modeled_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Pursuit,
    Coupled,
}

/// A compiled tracking problem specialized to one decision package: road,
/// obstacle set, adhesion, strike side and force corridor are baked in at
/// compile time, per-step data is pinned via bounds at solve time.
pub struct MpcProblem {
    kind: Kind,
    lay: Layout,
    cfg: MpcConfig,
    bp: BulletParams,
    road: RoadSpec,
    discs: Vec<PredictedDisc>,
    corridor: Option<ForceCorridor>,
    t_scale: f64,
    compiled: CompiledProblem,
    warm: Option<Vec<f64>>,
}

impl MpcProblem {
    /// Chassis-only tracker for the chasing and disengagement phases.
    pub fn pursuit(cfg: &MpcConfig, preset: &VehiclePreset, road: &RoadSpec, discs: &[PredictedDisc], mu: f64) -> Self {
        let bp = preset.bullet;
        let t_scale = bp.t_bounds[0].abs().max(bp.t_bounds[1].abs());
        let lay = Layout::new(cfg.horizon_steps, discs.len(), false);
        let circ_b = 0.5 * bp.length.hypot(bp.width);
        let hw_eff = road.half_width - cfg.road_margin;
        let obs_radii: Vec<f64> = discs.iter().map(|d| d.radius + circ_b + cfg.obs_margin).collect();

        let tape = Tape::new();
        let v = tape.inputs(&vec![0.0; lay.dim]);
        let mut s = BulletVars {
            x: v[lay.o_bullet],
            y: v[lay.o_bullet + 1],
            psi: v[lay.o_bullet + 2],
            vx: v[lay.o_bullet + 3],
            vy: v[lay.o_bullet + 4],
            r: v[lay.o_bullet + 5],
        };
        let mut last_d = v[lay.o_prev_u];
        let mut last_t = v[lay.o_prev_u + 1];
        let mut cost = tape.constant(0.0);
        for k in 0..lay.n {
            let dz = v[lay.delta(k)];
            let tn = v[lay.torque(k)];
            cost = cost
                + (dz - last_d).square().mul_add_c(cfg.w_du, 0.0)
                + (tn - last_t).square().mul_add_c(cfg.w_du, 0.0);
            last_d = dz;
            last_t = tn;
            let d = dz.mul_add_c(DELTA_SCALE, 0.0);
            s = tape_bullet_step(&s, d, tn, None, mu, &bp, t_scale, CONTROL_DT);
            let ex = s.x - v[lay.rref(k, 0)];
            let ey = s.y - v[lay.rref(k, 1)];
            let epsi = s.psi - v[lay.rref(k, 2)];
            let speed = add_c(s.vx.square() + s.vy.square(), SMOOTH_EPS).sqrt();
            let ev = speed - v[lay.rref(k, 3)];
            cost = cost
                + (ex.square() + ey.square()).mul_add_c(cfg.w_pos, 0.0)
                + epsi.square().mul_add_c(cfg.w_head, 0.0)
                + ev.square().mul_add_c(cfg.w_speed, 0.0);
            cost = cost + safety_cost(&v, &lay, |k, j| lay.bframe(k, j), k, s.x, s.y, hw_eff, &obs_radii, cfg);
        }
        let out = cost.index();
        Self {
            kind: Kind::Pursuit,
            lay,
            cfg: cfg.clone(),
            bp,
            road: road.clone(),
            discs: discs.to_vec(),
            corridor: None,
            t_scale,
            compiled: CompiledProblem::new(tape, out),
            warm: None,
        }
    }

    /// Joint bullet-and-surrogate tracker for the contact window.
    #[allow(clippy::too_many_arguments)]
    pub fn coupled(
        cfg: &MpcConfig,
        preset: &VehiclePreset,
        road: &RoadSpec,
        discs: &[PredictedDisc],
        mu: f64,
        side: f64,
        corridor: &ForceCorridor,
        net: &DenseNet,
        norm: &Normalization,
    ) -> Self {
        let bp = preset.bullet;
        let tp = preset.target;
        let t_scale = bp.t_bounds[0].abs().max(bp.t_bounds[1].abs());
        let lay = Layout::new(cfg.horizon_steps, discs.len(), true);
        let circ_b = 0.5 * bp.length.hypot(bp.width);
        let circ_t = 0.5 * tp.length.hypot(tp.width);
        let hw_eff = road.half_width - cfg.road_margin;
        let radii_b: Vec<f64> = discs.iter().map(|d| d.radius + circ_b + cfg.obs_margin).collect();
        let radii_t: Vec<f64> = discs.iter().map(|d| d.radius + circ_t + cfg.obs_margin).collect();
        // Strike-corner and panel levers in each body's own frame.
        let (lbx, lby) = (0.5 * bp.length, -side * 0.5 * bp.width);
        let lever_t = nominal_lever(&tp, side);

        let tape = Tape::new();
        let v = tape.inputs(&vec![0.0; lay.dim]);
        let wtab = tape.weights(Arc::new(net.weights.clone()));
        let mut st = TapeState {
            vx: v[lay.o_target],
            vy: v[lay.o_target + 1],
            psi: v[lay.o_target + 2],
            psi_dot: v[lay.o_target + 3],
            phi_dot: v[lay.o_target + 4],
            phi: v[lay.o_target + 5],
            x: v[lay.o_target + 6],
            y: v[lay.o_target + 7],
        };
        let mut sb = BulletVars {
            x: v[lay.o_bullet],
            y: v[lay.o_bullet + 1],
            psi: v[lay.o_bullet + 2],
            vx: v[lay.o_bullet + 3],
            vy: v[lay.o_bullet + 4],
            r: v[lay.o_bullet + 5],
        };
        let mut prev_fn = v[lay.o_prev_f].mul_add_c(FORCE_SCALE, 0.0);
        let mut prev_ft = v[lay.o_prev_f + 1].mul_add_c(FORCE_SCALE, 0.0);
        let mut last_d = v[lay.o_prev_u];
        let mut last_t = v[lay.o_prev_u + 1];
        let branch = v[lay.o_branch];
        let mut cost = tape.constant(0.0);

        for k in 0..lay.n {
            let dz = v[lay.delta(k)];
            let tn = v[lay.torque(k)];
            let fnn = v[lay.f_n(k)];
            let ftn = v[lay.f_t(k)];
            cost = cost
                + (dz - last_d).square().mul_add_c(cfg.w_du, 0.0)
                + (tn - last_t).square().mul_add_c(cfg.w_du, 0.0);
            last_d = dz;
            last_t = tn;
            let d = dz.mul_add_c(DELTA_SCALE, 0.0);

            // Start-of-step geometry: panel normal/tangent from the target
            // heading, strike corner and panel point for the gap, and the
            // reaction wrench on the bullet. The world force on the bullet
            // is +fn along the outward panel normal, +ft along the frame
            // tangent (normal heading + pi/2), mirroring the plant's
            // convention.
            let spt = st.psi.sin();
            let cpt = st.psi.cos();
            let spb = sb.psi.sin();
            let cpb = sb.psi.cos();
            let f_n = fnn.mul_add_c(FORCE_SCALE, 0.0);
            let f_t = ftn.mul_add_c(FORCE_SCALE, 0.0);
            let fxw = (f_n * spt + f_t * cpt).mul_add_c(-side, 0.0);
            let fyw = (f_n * cpt - f_t * spt).mul_add_c(side, 0.0);
            let bfx = cpb * fxw + spb * fyw;
            let bfy = cpb * fyw - spb * fxw;
            let mz = bfy.mul_add_c(lbx, 0.0) - bfx.mul_add_c(lby, 0.0);
            let wrench = WrenchVars { fx: bfx, fy: bfy, mz };

            let corner_x = sb.x + cpb.mul_add_c(lbx, 0.0) - spb.mul_add_c(lby, 0.0);
            let corner_y = sb.y + spb.mul_add_c(lbx, 0.0) + cpb.mul_add_c(lby, 0.0);
            let panel_x = st.x + cpt.mul_add_c(lever_t[0], 0.0) - spt.mul_add_c(lever_t[1], 0.0);
            let panel_y = st.y + spt.mul_add_c(lever_t[0], 0.0) + cpt.mul_add_c(lever_t[1], 0.0);
            let nx = spt.mul_add_c(-side, 0.0);
            let ny = cpt.mul_add_c(side, 0.0);
            let gap = nx * (corner_x - panel_x) + ny * (corner_y - panel_y);
            let sep = gap.mul_add_c(BETA_CC, 0.0).softplus().mul_add_c(1.0 / BETA_CC, 0.0);
            cost = cost + (fnn * sep).mul_add_c(cfg.w_cc, 0.0);

            let cn = v[lay.center(k, 0)];
            let ct = v[lay.center(k, 1)];
            cost = cost + ((fnn - cn).square() + (ftn - ct).square()).mul_add_c(cfg.w_force, 0.0);

            st = tape_pico_step(&tape, wtab, net, norm, &st, f_n, f_t, prev_fn, prev_ft, side, CONTROL_DT);
            prev_fn = f_n;
            prev_ft = f_t;
            sb = tape_bullet_step(&sb, d, tn, Some(&wrench), mu, &bp, t_scale, CONTROL_DT);

            let e_dx = (sb.x - st.x) - v[lay.rref(k, 0)];
            let e_dy = (sb.y - st.y) - v[lay.rref(k, 1)];
            let e_psi = sb.psi - v[lay.rref(k, 2)];
            let speed = add_c(sb.vx.square() + sb.vy.square(), SMOOTH_EPS).sqrt();
            let e_v = speed - v[lay.rref(k, 3)];
            cost = cost
                + (e_dx.square() + e_dy.square()).mul_add_c(cfg.w_rel_pos, 0.0)
                + e_psi.square().mul_add_c(cfg.w_rel_head, 0.0)
                + e_v.square().mul_add_c(cfg.w_speed, 0.0);

            cost = cost + safety_cost(&v, &lay, |k, j| lay.bframe(k, j), k, sb.x, sb.y, hw_eff, &radii_b, cfg);
            cost = cost + safety_cost(&v, &lay, |k, j| lay.tframe(k, j), k, st.x, st.y, hw_eff, &radii_t, cfg);
        }
        cost = cost
            + (st.psi - branch).square().mul_add_c(cfg.w_term, 0.0)
            + st.psi_dot.square().mul_add_c(cfg.w_term_rate, 0.0);
        let out = cost.index();
        Self {
            kind: Kind::Coupled,
            lay,
            cfg: cfg.clone(),
            bp,
            road: road.clone(),
            discs: discs.to_vec(),
            corridor: Some(corridor.clone()),
            t_scale,
            compiled: CompiledProblem::new(tape, out),
            warm: None,
        }
    }

    pub fn horizon(&self) -> usize {
        self.lay.n
    }

    pub fn decision_len(&self) -> usize {
        self.lay.dec_len()
    }

    pub fn is_coupled(&self) -> bool {
        self.kind == Kind::Coupled
    }

    pub fn flops_per_eval(&self) -> u64 {
        self.compiled.flops_per_eval()
    }

    /// Drop the warm start (called on replans and phase changes).
    pub fn reset_warm(&mut self) {
        self.warm = None;
    }

    /// Seed this problem's warm start from another problem's chassis
    /// decisions (steering and torque); force dimensions start at zero and
    /// get projected into their corridor boxes on the first solve. Used at
    /// the pursuit-to-coupled handover so the strike does not begin from a
    /// cold chassis plan.
    pub fn seed_warm_from(&mut self, other: &MpcProblem) {
        let n = self.lay.n;
        if other.lay.n != n {
            return;
        }
        if let Some(w) = &other.warm {
            let mut seeded = vec![0.0; self.lay.dec_len()];
            seeded[..2 * n].copy_from_slice(&w[..2 * n]);
            self.warm = Some(seeded);
        }
    }

    /// Direct access to the compiled objective for gradient verification.
    pub fn compiled_mut(&mut self) -> &mut CompiledProblem {
        &mut self.compiled
    }

    /// Assemble the full start vector and bounds for one solve: decisions
    /// from the shifted warm start (or rest defaults), parameters pinned by
    /// `lo = hi`.
    pub fn assemble(&self, p: &PinnedState<'_>) -> (Vec<f64>, BoxBounds) {
        let lay = &self.lay;
        let n = lay.n;
        assert_eq!(p.refs.rel.len(), n, "reference horizon must match the problem");
        assert_eq!(self.discs.len(), lay.n_obs);
        let dim = lay.dim;
        let mut x0 = vec![0.0; dim];
        let mut lo = vec![0.0; dim];
        let mut hi = vec![0.0; dim];

        // Current package-time interval index; exact because tau0 sits on
        // the control grid.
        let k0 = (p.tau0 / CONTROL_DT).round().max(0.0) as usize;

        // Decision bounds.
        for k in 0..n {
            lo[lay.delta(k)] = self.bp.delta_bounds[0] / DELTA_SCALE;
            hi[lay.delta(k)] = self.bp.delta_bounds[1] / DELTA_SCALE;
            lo[lay.torque(k)] = self.bp.t_bounds[0] / self.t_scale;
            hi[lay.torque(k)] = self.bp.t_bounds[1] / self.t_scale;
        }
        if let Some(corr) = &self.corridor {
            for k in 0..n {
                let b = corr.box_at(k0 + k);
                lo[lay.f_n(k)] = b.fn_min / FORCE_SCALE;
                hi[lay.f_n(k)] = b.fn_max / FORCE_SCALE;
                lo[lay.f_t(k)] = b.ft_min / FORCE_SCALE;
                hi[lay.f_t(k)] = b.ft_max / FORCE_SCALE;
            }
        }

        // Decision start: shifted warm start when available, otherwise hold
        // the previous input and sit on the corridor centers.
        match &self.warm {
            Some(w) => {
                let blocks = if lay.coupled { 4 } else { 2 };
                for b in 0..blocks {
                    for k in 0..n {
                        x0[b * n + k] = w[b * n + (k + 1).min(n - 1)];
                    }
                }
            }
            None => {
                for k in 0..n {
                    x0[lay.delta(k)] = p.prev_input.delta_f / DELTA_SCALE;
                    x0[lay.torque(k)] = p.prev_input.t_r / self.t_scale;
                }
                if let Some(corr) = &self.corridor {
                    for k in 0..n {
                        let c = corr.box_at(k0 + k).center();
                        x0[lay.f_n(k)] = c.normal / FORCE_SCALE;
                        x0[lay.f_t(k)] = c.tangential / FORCE_SCALE;
                    }
                }
            }
        }

        let mut pin = |ix: usize, value: f64| {
            x0[ix] = value;
            lo[ix] = value;
            hi[ix] = value;
        };

        if lay.coupled {
            let t = p.world.target.to_array();
            for (i, &ti) in t.iter().enumerate() {
                pin(lay.o_target + i, ti);
            }
            pin(lay.o_prev_f, p.prev_force.normal / FORCE_SCALE);
            pin(lay.o_prev_f + 1, p.prev_force.tangential / FORCE_SCALE);
            pin(lay.o_branch, p.branch);
        }
        let b = p.world.bullet.to_array();
        for (i, &bi) in b.iter().enumerate() {
            pin(lay.o_bullet + i, bi);
        }
        pin(lay.o_prev_u, p.prev_input.delta_f / DELTA_SCALE);
        pin(lay.o_prev_u + 1, p.prev_input.t_r / self.t_scale);

        for k in 0..n {
            if lay.coupled {
                pin(lay.rref(k, 0), p.refs.rel[k].dx);
                pin(lay.rref(k, 1), p.refs.rel[k].dy);
                let c = self.corridor.as_ref().expect("coupled problems carry a corridor").box_at(k0 + k).center();
                pin(lay.center(k, 0), c.normal / FORCE_SCALE);
                pin(lay.center(k, 1), c.tangential / FORCE_SCALE);
            } else {
                pin(lay.rref(k, 0), p.refs.abs_pos[k][0]);
                pin(lay.rref(k, 1), p.refs.abs_pos[k][1]);
            }
            pin(lay.rref(k, 2), p.refs.abs_psi[k]);
            pin(lay.rref(k, 3), p.refs.abs_speed[k]);

            let (s_b, _) = self.road.station_of(p.refs.abs_pos[k]);
            let (c, th) = self.road.centerline_at(s_b);
            pin(lay.bframe(k, 0), c[0]);
            pin(lay.bframe(k, 1), c[1]);
            pin(lay.bframe(k, 2), th.sin());
            pin(lay.bframe(k, 3), th.cos());
            if lay.coupled {
                let (pt, _) = predict_target_pose(&p.world.target, (k + 1) as f64 * CONTROL_DT);
                let (s_t, _) = self.road.station_of(pt);
                let (ct_, tht) = self.road.centerline_at(s_t);
                pin(lay.tframe(k, 0), ct_[0]);
                pin(lay.tframe(k, 1), ct_[1]);
                pin(lay.tframe(k, 2), tht.sin());
                pin(lay.tframe(k, 3), tht.cos());
            }
            for (j, d) in self.discs.iter().enumerate() {
                let c = d.at(p.tau0 + (k + 1) as f64 * CONTROL_DT);
                pin(lay.obs(j, k, 0), c[0]);
                pin(lay.obs(j, k, 1), c[1]);
            }
        }
        (x0, BoxBounds::new(lo, hi))
    }

    /// Run one receding-horizon solve from the pinned state and return the
    /// first-interval decision. The accepted warm start is stored for the
    /// next step.
    pub fn solve_step(&mut self, p: &PinnedState<'_>) -> Result<MpcSolution, OptimError> {
        let (x0, bounds) = self.assemble(p);
        let solve_cfg = SolveConfig { max_iters: self.cfg.max_iters, ..SolveConfig::default() };
        let res = solve(&mut self.compiled, &x0, &bounds, &solve_cfg)?;
        let n = self.lay.n;
        let decision = res.x[..self.lay.dec_len()].to_vec();
        self.warm = Some(decision.clone());
        let input = BulletInput { delta_f: res.x[self.lay.delta(0)], t_r: res.x[self.lay.torque(0)] * self.t_scale };
        let planned_force = if self.lay.coupled {
            ContactForce { normal: res.x[self.lay.f_n(0)] * FORCE_SCALE, tangential: res.x[self.lay.f_t(0)] * FORCE_SCALE }
        } else {
            ContactForce::default()
        };
        let _ = n;
        let work_flops = (res.n_value_evals + 3 * res.n_grad_evals) as f64 * self.compiled.flops_per_eval() as f64;
        Ok(MpcSolution {
            input,
            planned_force,
            cost: res.cost,
            iterations: res.iterations,
            converged: res.converged,
            trace: res.trace,
            decision,
            work_flops,
            modeled_ms: modeled_ms(work_flops),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::reference::generate_reference;
    use crate::controller::RelativeState;
    use crate::dynamics::{BodyWrench, BulletState, TargetState};
    use crate::planner::testutil::toy_spin_net;
    use crate::planner::{plan, PitMode, PlanEnv, PlannerConfig};
    use crate::scenario::{RoadSpec, RoadTopology};

    fn straight_road() -> RoadSpec {
        RoadSpec {
            topology: RoadTopology::StraightUrban,
            lane_count: 2,
            lane_width: 3.5,
            half_width: 5.25,
            length: 300.0,
        }
    }

    fn world() -> WorldState {
        let target = TargetState { vx: 11.0, vy: 0.0, psi: 0.0, psi_dot: 0.0, phi_dot: 0.0, phi: 0.0, x: 42.0, y: 0.0 };
        let bullet = BulletState { x: 36.0, y: 1.8, psi: 0.0, vx: 13.0, vy: 0.0, r: 0.0 };
        WorldState::new(target, bullet)
    }

    /// A straight-ahead reference plan at constant speed down the centerline.
    fn straight_refs(n: usize, x0: f64, v: f64) -> ReferencePlan {
        let mut plan = ReferencePlan {
            rel: vec![RelativeState { dx: 0.0, dy: 0.0, dpsi: 0.0, dv: 0.0 }; n],
            abs_pos: Vec::new(),
            abs_psi: vec![0.0; n],
            abs_speed: vec![v; n],
            target_psi: vec![0.0; n],
        };
        for k in 0..n {
            plan.abs_pos.push([x0 + v * (k + 1) as f64 * CONTROL_DT, 0.0]);
        }
        plan
    }

    #[test]
    fn tape_bullet_step_matches_scalar_twin_bitwise_tight() {
        let preset = VehiclePreset::full_size();
        let bp = preset.bullet;
        let t_scale = 600.0;
        let cases = [
            ([0.0, 0.0, 0.0, 12.0, 0.0, 0.0], 0.05, 120.0, [0.0, 0.0, 0.0]),
            ([3.0, -1.0, 0.4, 14.0, 0.6, 0.3], -0.1, -300.0, [1500.0, -2200.0, 4000.0]),
            ([-5.0, 2.0, -2.8, 6.0, -1.2, -0.8], 0.3, 250.0, [-800.0, 900.0, -2500.0]),
        ];
        for (arr, delta, torque, w) in cases {
            let s = BulletState::from_array(arr);
            let wrench = BodyWrench { fx: w[0], fy: w[1], mz: w[2] };
            let expect = smooth_bullet_step(&s, delta, torque, &wrench, 0.85, &bp, CONTROL_DT);

            // Tape side: inputs are [delta, torque_norm, state x6, wrench x3];
            // the output is the squared distance to the scalar twin's result.
            let tape = Tape::new();
            let x0 = [
                delta,
                torque / t_scale,
                arr[0],
                arr[1],
                arr[2],
                arr[3],
                arr[4],
                arr[5],
                w[0],
                w[1],
                w[2],
            ];
            let v = tape.inputs(&x0);
            let sv = BulletVars { x: v[2], y: v[3], psi: v[4], vx: v[5], vy: v[6], r: v[7] };
            let wv = WrenchVars { fx: v[8], fy: v[9], mz: v[10] };
            let out = tape_bullet_step(&sv, v[0], v[1], Some(&wv), 0.85, &bp, t_scale, CONTROL_DT);
            let e = expect.to_array();
            let d2 = add_c(out.x, -e[0]).square()
                + add_c(out.y, -e[1]).square()
                + add_c(out.psi, -e[2]).square()
                + add_c(out.vx, -e[3]).square()
                + add_c(out.vy, -e[4]).square()
                + add_c(out.r, -e[5]).square();
            let ix = d2.index();
            let mut prog = CompiledProblem::new(tape, ix);
            let err = prog.eval(&x0);
            assert!(err < 1e-20, "tape and scalar twin diverge: squared err {err:.3e}");
        }
    }

    #[test]
    fn smooth_twin_stays_close_to_the_plant_at_moderate_slip() {
        // The twin softens the tire clamp and regularizes the slip angle;
        // away from saturation the step should agree with the plant to a
        // fraction of a percent.
        let preset = VehiclePreset::full_size();
        let bp = preset.bullet;
        let s = BulletState { x: 0.0, y: 0.0, psi: 0.1, vx: 13.0, vy: 0.2, r: 0.05 };
        let u = crate::dynamics::BulletInput { delta_f: 0.04, t_r: 150.0 };
        let w = BodyWrench::default();
        let plant = crate::dynamics::bullet_step(&s, &u, &w, 0.9, CONTROL_DT, &bp);
        let twin = smooth_bullet_step(&s, u.delta_f, u.t_r, &w, 0.9, &bp, CONTROL_DT);
        let (a, b) = (plant.to_array(), twin.to_array());
        for i in 0..6 {
            let tol = 1e-3 * (1.0 + a[i].abs());
            assert!((a[i] - b[i]).abs() < tol, "component {i}: plant {} twin {}", a[i], b[i]);
        }
    }

    #[test]
    fn pursuit_gradient_matches_central_differences_on_decisions() {
        let preset = VehiclePreset::full_size();
        let road = straight_road();
        let discs = vec![PredictedDisc { center: [80.0, 2.0], velocity: [1.0, 0.0], radius: 0.8 }];
        let cfg = MpcConfig { horizon_steps: 5, ..MpcConfig::default() };
        let mut prob = MpcProblem::pursuit(&cfg, &preset, &road, &discs, 0.9);
        let w = world();
        let refs = straight_refs(5, w.bullet.x, 13.0);
        let pinned = PinnedState {
            world: &w,
            prev_input: BulletInput { delta_f: 0.02, t_r: 100.0 },
            prev_force: ContactForce::default(),
            refs: &refs,
            tau0: 0.0,
            branch: 0.0,
        };
        let (mut x, _) = prob.assemble(&pinned);
        // Nudge the decisions off the rest point so no term is at a kink.
        for k in 0..5 {
            x[k] = 0.03 - 0.01 * k as f64;
            x[5 + k] = 0.1 + 0.05 * k as f64;
        }
        let dec = prob.decision_len();
        let (_, grad) = prob.compiled_mut().eval_grad(&x).unwrap();
        let mut xp = x.clone();
        for i in 0..dec {
            let h = 1e-6;
            let xi = x[i];
            xp[i] = xi + h;
            let fp = prob.compiled_mut().eval(&xp);
            xp[i] = xi - h;
            let fm = prob.compiled_mut().eval(&xp);
            xp[i] = xi;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(1e-6);
            assert!(rel < 1e-5, "decision {i}: tape {} fd {} rel {rel:.2e}", grad[i], fd);
        }
    }

    #[test]
    fn coupled_gradient_matches_central_differences_on_decisions() {
        let (net, norm) = toy_spin_net();
        let preset = VehiclePreset::full_size();
        let road = straight_road();
        let discs = vec![PredictedDisc { center: [90.0, -2.5], velocity: [0.0, 0.0], radius: 0.7 }];
        let env = PlanEnv { road: road.clone(), obstacles: vec![], mu: 0.9, preset: VehiclePreset::full_size() };
        let w = world();
        let (pkg, _) = plan(&w, &env, &net, &norm, &PlannerConfig::default()).unwrap();
        assert_eq!(pkg.mode, PitMode::PitLeft);
        let cfg = MpcConfig { horizon_steps: 6, ..MpcConfig::default() };
        let mut prob = MpcProblem::coupled(
            &cfg, &preset, &road, &discs, 0.9, 1.0, &pkg.force_corridor, &net, &norm,
        );
        let refs = generate_reference(&pkg, &w, pkg.contact_window[0], &preset, 6, CONTROL_DT);
        let pinned = PinnedState {
            world: &w,
            prev_input: BulletInput { delta_f: -0.01, t_r: 50.0 },
            prev_force: ContactForce { normal: 4.0e3, tangential: 500.0 },
            refs: &refs,
            tau0: pkg.contact_window[0],
            branch: std::f64::consts::PI,
        };
        let (mut x, _) = prob.assemble(&pinned);
        for k in 0..6 {
            x[k] = -0.02 + 0.015 * k as f64;
            x[6 + k] = 0.2 - 0.03 * k as f64;
            x[12 + k] = 0.4 + 0.1 * k as f64;
            x[18 + k] = 0.05 * k as f64;
        }
        let dec = prob.decision_len();
        let (_, grad) = prob.compiled_mut().eval_grad(&x).unwrap();
        let fd = {
            let mut xp = x.clone();
            let mut out = Vec::with_capacity(dec);
            for i in 0..dec {
                let h = 1e-6;
                let xi = x[i];
                xp[i] = xi + h;
                let fp = prob.compiled_mut().eval(&xp);
                xp[i] = xi - h;
                let fm = prob.compiled_mut().eval(&xp);
                xp[i] = xi;
                out.push((fp - fm) / (2.0 * h));
            }
            out
        };
        for i in 0..dec {
            let rel = (grad[i] - fd[i]).abs() / grad[i].abs().max(1e-6);
            assert!(rel < 1e-5, "decision {i}: tape {} fd {} rel {rel:.2e}", grad[i], fd[i]);
        }
    }

    #[test]
    fn rate_only_objective_is_minimized_by_holding_the_previous_input() {
        // With every tracking and safety weight off, the cost reduces to the
        // input-rate chain anchored at the previous input; its minimum is
        // exactly "hold that input" with zero cost.
        let preset = VehiclePreset::full_size();
        let road = straight_road();
        let cfg = MpcConfig {
            horizon_steps: 8,
            w_pos: 0.0,
            w_head: 0.0,
            w_speed: 0.0,
            w_road: 0.0,
            w_obs: 0.0,
            max_iters: 40,
            ..MpcConfig::default()
        };
        let mut prob = MpcProblem::pursuit(&cfg, &preset, &road, &[], 0.9);
        let w = world();
        let refs = straight_refs(8, w.bullet.x, 13.0);
        let prev = BulletInput { delta_f: 0.1, t_r: -120.0 };
        let pinned = PinnedState {
            world: &w,
            prev_input: prev,
            prev_force: ContactForce::default(),
            refs: &refs,
            tau0: 0.0,
            branch: 0.0,
        };
        let sol = prob.solve_step(&pinned).unwrap();
        assert!(sol.cost < 1e-12, "pure rate objective should reach ~0, got {}", sol.cost);
        for k in 0..8 {
            approx::assert_abs_diff_eq!(sol.decision[k], 0.1, epsilon = 1e-6);
            approx::assert_abs_diff_eq!(sol.decision[8 + k] * 600.0, -120.0, epsilon = 1e-3);
        }
    }

    #[test]
    fn pursuit_tracks_a_straight_centerline_reference() {
        let preset = VehiclePreset::full_size();
        let road = straight_road();
        let cfg = MpcConfig::default();
        let mut prob = MpcProblem::pursuit(&cfg, &preset, &road, &[], 0.9);
        // Start half a meter off the centerline with matched speed.
        let mut w = world();
        w.bullet.y = 0.5;
        let mut prev = BulletInput::default();
        for _ in 0..30 {
            let refs = straight_refs(cfg.horizon_steps, w.bullet.x, 13.0);
            let pinned = PinnedState {
                world: &w,
                prev_input: prev,
                prev_force: ContactForce::default(),
                refs: &refs,
                tau0: 0.0,
                branch: 0.0,
            };
            let sol = prob.solve_step(&pinned).unwrap();
            let (w2, _) = crate::dynamics::oracle_step(
                &w,
                &sol.input,
                &crate::dynamics::TargetInput::default(),
                0.9,
                CONTROL_DT,
                &preset.target,
                &preset.bullet,
                &crate::dynamics::ContactParams::default(),
            )
            .unwrap();
            // Keep the target far away so no contact can occur.
            let mut w2 = w2;
            w2.target.x = w.bullet.x + 120.0;
            w = w2;
            prev = sol.input;
        }
        assert!(w.bullet.y.abs() < 0.25, "lateral error should shrink, got {}", w.bullet.y);
        assert!((w.bullet.vx - 13.0).abs() < 1.0, "speed should hold near 13, got {}", w.bullet.vx);
        assert!(w.bullet.psi.abs() < 0.05);
    }

    #[test]
    fn warm_start_needs_no_more_iterations_than_cold() {
        let preset = VehiclePreset::full_size();
        let road = straight_road();
        let cfg = MpcConfig::default();
        let mut prob = MpcProblem::pursuit(&cfg, &preset, &road, &[], 0.9);
        let mut w = world();
        w.bullet.y = 1.2;
        let refs = straight_refs(cfg.horizon_steps, w.bullet.x, 13.0);
        let pinned = PinnedState {
            world: &w,
            prev_input: BulletInput::default(),
            prev_force: ContactForce::default(),
            refs: &refs,
            tau0: 0.0,
            branch: 0.0,
        };
        let cold = prob.solve_step(&pinned).unwrap();
        for win in cold.trace.windows(2) {
            assert!(win[1] <= win[0] + 1e-12, "solver trace must be non-increasing");
        }
        // Same state again: the stored solution is already near-optimal.
        let warm = prob.solve_step(&pinned).unwrap();
        assert!(warm.iterations <= cold.iterations, "warm {} > cold {}", warm.iterations, cold.iterations);
        assert!(warm.cost <= cold.cost + 1e-9);
    }

    #[test]
    fn committed_force_while_separated_pays_the_consistency_penalty() {
        let (net, norm) = toy_spin_net();
        let preset = VehiclePreset::full_size();
        let road = straight_road();
        let env = PlanEnv { road: road.clone(), obstacles: vec![], mu: 0.9, preset: VehiclePreset::full_size() };
        let w0 = world();
        let (pkg, _) = plan(&w0, &env, &net, &norm, &PlannerConfig::default()).unwrap();
        let cfg = MpcConfig { horizon_steps: 10, ..MpcConfig::default() };
        // Probe with the window open so the corridor commits real force.
        let tau = pkg.contact_window[0] + 0.1;
        let k0 = (tau / CONTROL_DT).round() as usize;
        assert!(
            (0..cfg.horizon_steps).any(|k| !pkg.force_corridor.box_at(k0 + k).is_zero()),
            "probe horizon must overlap the committed pulse"
        );
        let solve_at = |w: &WorldState, prob: &mut MpcProblem| {
            let refs = generate_reference(&pkg, w, tau, &preset, 10, CONTROL_DT);
            let pinned = PinnedState {
                world: w,
                prev_input: BulletInput::default(),
                prev_force: ContactForce::default(),
                refs: &refs,
                tau0: tau,
                branch: std::f64::consts::PI,
            };
            prob.solve_step(&pinned).unwrap()
        };

        // Pressed on the panel: striking corner right at the panel point.
        let tp = preset.target;
        let bp = preset.bullet;
        let mut near = w0;
        near.target.x = 42.0;
        let panel = [42.0 - 0.25 * tp.length, 0.5 * tp.width];
        near.bullet.x = panel[0] - 0.5 * bp.length;
        near.bullet.y = panel[1] + 0.5 * bp.width - 0.01;
        near.bullet.vx = 11.5;
        let mut prob_near = MpcProblem::coupled(&cfg, &preset, &road, &[], 0.9, 1.0, &pkg.force_corridor, &net, &norm);
        let sol_near = solve_at(&near, &mut prob_near);

        // Same commitment but hovering 3 m off the panel: the corridor still
        // demands the pulse, and every committed newton now rides on an open
        // gap, so the consistency term makes the whole solve far costlier.
        let mut far = near;
        far.bullet.y += 3.0;
        let mut prob_far = MpcProblem::coupled(&cfg, &preset, &road, &[], 0.9, 1.0, &pkg.force_corridor, &net, &norm);
        let sol_far = solve_at(&far, &mut prob_far);

        assert!(
            sol_far.cost > sol_near.cost + 50.0,
            "separated commitment should cost far more: near {:.1} far {:.1}",
            sol_near.cost,
            sol_far.cost
        );
    }

    #[test]
    fn layout_blocks_do_not_overlap() {
        for (n, n_obs, coupled) in [(20, 0, false), (20, 3, false), (20, 0, true), (12, 2, true)] {
            let lay = Layout::new(n, n_obs, coupled);
            let mut seen = vec![false; lay.dim];
            let mut mark = |ix: usize| {
                assert!(!seen[ix], "index {ix} assigned twice");
                seen[ix] = true;
            };
            for k in 0..n {
                mark(lay.delta(k));
                mark(lay.torque(k));
                if coupled {
                    mark(lay.f_n(k));
                    mark(lay.f_t(k));
                }
            }
            if coupled {
                for i in 0..8 {
                    mark(lay.o_target + i);
                }
                mark(lay.o_prev_f);
                mark(lay.o_prev_f + 1);
                mark(lay.o_branch);
            }
            for i in 0..6 {
                mark(lay.o_bullet + i);
            }
            mark(lay.o_prev_u);
            mark(lay.o_prev_u + 1);
            for k in 0..n {
                for j in 0..4 {
                    mark(lay.rref(k, j));
                    mark(lay.bframe(k, j));
                    if coupled {
                        mark(lay.tframe(k, j));
                    }
                }
                if coupled {
                    mark(lay.center(k, 0));
                    mark(lay.center(k, 1));
                }
                for j in 0..n_obs {
                    mark(lay.obs(j, k, 0));
                    mark(lay.obs(j, k, 1));
                }
            }
            assert!(seen.iter().all(|&s| s), "layout leaves holes");
        }
    }
}
