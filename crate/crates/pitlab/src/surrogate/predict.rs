//! One-step prediction: pose canonicalization, feature assembly, residual
//! decoding with exact kinematic advance, and the mirror wrapper that serves
//! right-panel contacts from a left-panel-trained network.

use super::{DenseNet, MLPSpec, Normalization, PicoNet, SurrogateError, FORCE_SCALE};
use crate::dynamics::{ContactForce, TargetState};
use crate::math::Rot2;

/// Anything that maps a 12-feature input to the 8 normalized increments.
pub trait Predictor {
    fn spec(&self) -> &MLPSpec;
    fn forward(&self, input: &[f64]) -> Result<Vec<f64>, SurrogateError>;
}

impl Predictor for DenseNet {
    fn spec(&self) -> &MLPSpec {
        &self.spec
    }

    fn forward(&self, input: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        DenseNet::forward(self, input)
    }
}

impl Predictor for PicoNet {
    fn spec(&self) -> &MLPSpec {
        &self.spec
    }

    fn forward(&self, input: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        self.to_dense().forward(input)
    }
}

/// Project a state into the canonical frame: pose zeroed, body-frame
/// velocities and roll untouched. Layout matches `TargetState::to_array`.
pub fn canonical_state(x: &TargetState) -> [f64; 8] {
    [x.vx, x.vy, 0.0, x.psi_dot, x.phi_dot, x.phi, 0.0, 0.0]
}

/// Assemble the 12 network features: normalized canonical state plus the
/// force history scaled by [`FORCE_SCALE`].
pub fn features(norm: &Normalization, x_prev: &TargetState, f_t: &ContactForce, f_prev: &ContactForce) -> [f64; 12] {
    let s = norm.normalize_state(&canonical_state(x_prev));
    [
        s[0],
        s[1],
        s[2],
        s[3],
        s[4],
        s[5],
        s[6],
        s[7],
        f_t.normal / FORCE_SCALE,
        f_t.tangential / FORCE_SCALE,
        f_prev.normal / FORCE_SCALE,
        f_prev.tangential / FORCE_SCALE,
    ]
}

/// Ground-truth canonical increment the network should output
/// (unnormalized): plain differences for the velocity-like dimensions, and
/// residuals beyond the exact kinematic advance for heading and position
/// (position residuals rotated into the body-aligned frame at `x_prev`).
pub fn target_increments(p: &TargetState, n: &TargetState, dt: f64) -> [f64; 8] {
    let rot = Rot2::new(p.psi);
    let [xdot, ydot] = rot.apply([p.vx, p.vy]);
    let pos_res_body = rot.apply_inv([n.x - p.x - xdot * dt, n.y - p.y - ydot * dt]);
    [
        n.vx - p.vx,
        n.vy - p.vy,
        crate::math::wrap_to_pi(n.psi - p.psi) - p.psi_dot * dt,
        n.psi_dot - p.psi_dot,
        n.phi_dot - p.phi_dot,
        n.phi - p.phi,
        pos_res_body[0],
        pos_res_body[1],
    ]
}

/// Raw canonical increments predicted by the network for `x_prev` under the
/// left-panel force convention.
fn net_increments(
    net: &dyn Predictor,
    norm: &Normalization,
    x_prev: &TargetState,
    f_t: &ContactForce,
    f_prev: &ContactForce,
) -> Result<[f64; 8], SurrogateError> {
    let input = features(norm, x_prev, f_t, f_prev);
    let y = net.forward(&input)?;
    Ok(norm.decode_delta(&y))
}

/// Apply canonical increments to a concrete state: velocity-like dimensions
/// add directly, heading and position add their exact kinematic advance
/// plus the (body-frame) residual.
fn apply_increments(x_prev: &TargetState, d: &[f64; 8], dt: f64) -> TargetState {
    let rot = Rot2::new(x_prev.psi);
    let [xdot, ydot] = rot.apply([x_prev.vx, x_prev.vy]);
    let pos_res = rot.apply([d[6], d[7]]);
    TargetState {
        vx: x_prev.vx + d[0],
        vy: x_prev.vy + d[1],
        psi: x_prev.psi + x_prev.psi_dot * dt + d[2],
        psi_dot: x_prev.psi_dot + d[3],
        phi_dot: x_prev.phi_dot + d[4],
        phi: x_prev.phi + d[5],
        x: x_prev.x + xdot * dt + pos_res[0],
        y: x_prev.y + ydot * dt + pos_res[1],
    }
}

/// One-step prediction under the left-panel contact convention.
pub fn predict_step(
    net: &dyn Predictor,
    norm: &Normalization,
    x_prev: &TargetState,
    f_t: &ContactForce,
    f_prev: &ContactForce,
    dt: f64,
) -> Result<TargetState, SurrogateError> {
    let d = net_increments(net, norm, x_prev, f_t, f_prev)?;
    Ok(apply_increments(x_prev, &d, dt))
}

/// One-step prediction for either panel. `side` is +1 for the left panel
/// (the training convention) and -1 for the right panel, which is served by
/// mirroring: the lateral state, roll, and tangential force flip sign going
/// in, and the mirror-odd increments flip sign coming out.
pub fn predict_step_side(
    net: &dyn Predictor,
    norm: &Normalization,
    x_prev: &TargetState,
    f_t: &ContactForce,
    f_prev: &ContactForce,
    side: f64,
    dt: f64,
) -> Result<TargetState, SurrogateError> {
    if side >= 0.0 {
        return predict_step(net, norm, x_prev, f_t, f_prev, dt);
    }
    let xm = TargetState {
        vx: x_prev.vx,
        vy: -x_prev.vy,
        psi: 0.0,
        psi_dot: -x_prev.psi_dot,
        phi_dot: -x_prev.phi_dot,
        phi: -x_prev.phi,
        x: 0.0,
        y: 0.0,
    };
    let fm_t = ContactForce { normal: f_t.normal, tangential: -f_t.tangential };
    let fm_prev = ContactForce { normal: f_prev.normal, tangential: -f_prev.tangential };
    let dm = net_increments(net, norm, &xm, &fm_t, &fm_prev)?;
    let d = [dm[0], -dm[1], -dm[2], -dm[3], -dm[4], -dm[5], dm[6], -dm[7]];
    Ok(apply_increments(x_prev, &d, dt))
}

/// Iterate the one-step model over a per-interval force schedule, returning
/// the `forces.len() + 1` visited states (initial state first). The force
/// history starts from rest (zero previous force).
pub fn rollout_states(
    net: &dyn Predictor,
    norm: &Normalization,
    x0: &TargetState,
    forces: &[ContactForce],
    side: f64,
    dt: f64,
) -> Result<Vec<TargetState>, SurrogateError> {
    let mut states = Vec::with_capacity(forces.len() + 1);
    states.push(*x0);
    let mut prev = ContactForce::default();
    let mut x = *x0;
    for f in forces {
        x = predict_step_side(net, norm, &x, f, &prev, side, dt)?;
        states.push(x);
        prev = *f;
    }
    Ok(states)
}
