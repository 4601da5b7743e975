//! Physics residual: how badly a predicted transition violates the target's
//! planar rigid-body + roll equations, with time derivatives taken as
//! finite differences across the step and every non-derivative term
//! evaluated at the pre-step state.

use super::{predict_step, Normalization, Predictor, TransitionSample};
use crate::dynamics::{
    map_to_body, nominal_lever, target_reference_derivatives, BodyWrench, ContactForce,
    TargetInput, TargetParams, TargetState,
};
use crate::math::pairwise_sum;
use std::f64::consts::FRAC_PI_2;

/// Per-equation weights: surge, sway, yaw, roll. The defaults are inverse
/// squared characteristic accelerations, so each term is O(1) for O(1)
/// relative violations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsWeights {
    pub w: [f64; 4],
}

impl Default for PhysicsWeights {
    fn default() -> Self {
        // ~10 m/s^2 surge/sway, ~10 rad/s^2 yaw, ~20 rad/s^2 roll.
        Self { w: [1e-2, 1e-2, 1e-2, 2.5e-3] }
    }
}

/// Body wrench on the target implied by a sample's current-step forces
/// under the left-panel convention (the dataset convention): the target
/// feels the negated pair member through the panel frame at the nominal
/// rear-quarter lever.
pub fn sample_wrench(s: &TransitionSample, tp: &TargetParams) -> BodyWrench {
    let f = ContactForce { normal: -s.fn_hist[0], tangential: -s.ft_hist[0] };
    map_to_body(&f, FRAC_PI_2, 0.0, nominal_lever(tp, 1.0))
}

/// Raw residuals of the four dynamic equations for one predicted
/// transition. Derivatives are `(pred - prev) / dt`; everything else sits
/// at `x_prev`, which makes an exact forward-Euler step of the reference
/// dynamics residual-free by construction.
pub fn residuals(
    x_prev: &TargetState,
    x_pred: &TargetState,
    dt: f64,
    wrench: &BodyWrench,
    mu: f64,
    tp: &TargetParams,
) -> [f64; 4] {
    let d = target_reference_derivatives(x_prev, &TargetInput::default(), wrench, mu, tp);
    let ap = x_prev.to_array();
    let an = x_pred.to_array();
    let fd_vx = (an[0] - ap[0]) / dt;
    let fd_vy = (an[1] - ap[1]) / dt;
    let fd_r = (an[3] - ap[3]) / dt;
    let fd_p = (an[4] - ap[4]) / dt;
    // Roll equation with the sway derivative substituted by its finite
    // difference, keeping the residual zero whenever sway and roll are
    // jointly Euler-consistent.
    let roll_ref = (tp.m * tp.h_cg * (fd_vy + ap[3] * ap[0]) - tp.k_phi * ap[5] - tp.c_phi * ap[4]) / tp.ix;
    [fd_vx - d[0], fd_vy - d[1], fd_r - d[3], fd_p - roll_ref]
}

/// Mean weighted squared residual over a batch, with the predictor supplied
/// as a closure so exact integrators can stand in for the network.
pub fn physics_residual_with(
    mut predict: impl FnMut(&TransitionSample) -> TargetState,
    batch: &[TransitionSample],
    tp: &TargetParams,
    w: &PhysicsWeights,
) -> f64 {
    assert!(!batch.is_empty(), "physics residual of an empty batch");
    let per_sample: Vec<f64> = batch
        .iter()
        .map(|s| {
            let pred = predict(s);
            let r = residuals(&s.x_prev, &pred, s.dt, &sample_wrench(s, tp), s.mu, tp);
            r.iter().zip(&w.w).map(|(ri, wi)| wi * ri * ri).sum()
        })
        .collect();
    pairwise_sum(&per_sample) / batch.len() as f64
}

/// Mean weighted squared residual of the network's own predictions.
pub fn physics_residual(
    net: &dyn Predictor,
    norm: &Normalization,
    batch: &[TransitionSample],
    tp: &TargetParams,
    w: &PhysicsWeights,
) -> f64 {
    physics_residual_with(
        |s| {
            let f_t = ContactForce { normal: s.fn_hist[0], tangential: s.ft_hist[0] };
            let f_p = ContactForce { normal: s.fn_hist[1], tangential: s.ft_hist[1] };
            predict_step(net, norm, &s.x_prev, &f_t, &f_p, s.dt).expect("dims fixed by pipeline")
        },
        batch,
        tp,
        w,
    )
}
