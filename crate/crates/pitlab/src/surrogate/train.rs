//! The three training stages. All share one epoch loop: seeded minibatch
//! Adam with an epoch-level accept/revert rule — if an epoch does not
//! improve the full-dataset loss, its updates are rolled back and the
//! learning rate halves — so loss histories are monotone by construction
//! and every run is bitwise reproducible from its seed.

use super::cluster::{pullback, reconstruct};
use super::physics::{residuals, sample_wrench, PhysicsWeights};
use super::predict::{features, target_increments};
use super::{
    DenseNet, MLPSpec, Normalization, PicoNet, SurrogateError, TransitionSample,
};
use crate::dynamics::{ContactForce, TargetParams, TargetState};
use crate::math::{pairwise_sum, Rot2};
use crate::optim::Adam;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Minimum dataset size accepted by the training entry points.
pub const MIN_DATASET: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_phys: f64,
    pub lambda_param: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 3e-3, epochs: 150, batch_size: 256, lambda_phys: 0.05, lambda_param: 3e-4, seed: 0x51D }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Best accepted full-dataset loss after each epoch; non-increasing,
    /// length equals the configured epoch count.
    pub loss_history: Vec<f64>,
    pub final_loss: f64,
}

/// Precomputed per-sample features and normalized regression targets.
struct Prepped {
    inputs: Vec<[f64; 12]>,
    targets: Vec<[f64; 8]>,
}

fn prep(samples: &[TransitionSample], norm: &Normalization) -> Prepped {
    let mut inputs = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        let f_t = ContactForce { normal: s.fn_hist[0], tangential: s.ft_hist[0] };
        let f_p = ContactForce { normal: s.fn_hist[1], tangential: s.ft_hist[1] };
        inputs.push(features(norm, &s.x_prev, &f_t, &f_p));
        targets.push(norm.encode_delta(&target_increments(&s.x_prev, &s.x_next, s.dt)));
    }
    Prepped { inputs, targets }
}

/// Reassemble the predicted next state from a normalized network output.
fn predicted_state(norm: &Normalization, x_prev: &TargetState, y: &[f64], dt: f64) -> TargetState {
    let d = norm.decode_delta(y);
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

/// Per-sample loss pieces at one forward output. Returns the sample's
/// contribution (data + lambda_phys * physics) and fills `dl_dy` with the
/// adjoint, both omitting the 1/batch factor the caller applies.
#[allow(clippy::too_many_arguments)]
fn sample_loss_adjoint(
    norm: &Normalization,
    s: &TransitionSample,
    y: &[f64],
    target: &[f64; 8],
    tp: &TargetParams,
    lambda_phys: f64,
    w_phys: &PhysicsWeights,
    dl_dy: &mut [f64; 8],
) -> f64 {
    let mut data = 0.0;
    for d in 0..8 {
        let e = y[d] - target[d];
        data += e * e / 8.0;
        dl_dy[d] = 2.0 * e / 8.0;
    }
    let mut loss = data;
    if lambda_phys > 0.0 {
        let pred = predicted_state(norm, &s.x_prev, y, s.dt);
        let r = residuals(&s.x_prev, &pred, s.dt, &sample_wrench(s, tp), s.mu, tp);
        let w = &w_phys.w;
        let phys: f64 = r.iter().zip(w).map(|(ri, wi)| wi * ri * ri).sum();
        loss += lambda_phys * phys;
        // Chain through the finite differences: residual k reads the
        // predicted state once, scaled by the decoder's std.
        let sd = &norm.delta_std;
        let dt = s.dt;
        dl_dy[0] += lambda_phys * 2.0 * w[0] * r[0] * sd[0] / dt;
        dl_dy[1] += lambda_phys * (2.0 * w[1] * r[1] - 2.0 * w[3] * r[3] * tp.m * tp.h_cg / tp.ix) * sd[1] / dt;
        dl_dy[3] += lambda_phys * 2.0 * w[2] * r[2] * sd[3] / dt;
        dl_dy[4] += lambda_phys * 2.0 * w[3] * r[3] * sd[4] / dt;
    }
    loss
}

/// Full training loss (data MSE + physics residual) of a network on a
/// batch. The finite-difference reference for the gradient check.
pub fn training_loss(
    net: &DenseNet,
    norm: &Normalization,
    batch: &[TransitionSample],
    tp: &TargetParams,
    lambda_phys: f64,
) -> f64 {
    let w_phys = PhysicsWeights::default();
    let prepped = prep(batch, norm);
    let per: Vec<f64> = batch
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let y = net.forward(&prepped.inputs[i]).expect("feature width fixed");
            let mut scratch = [0.0; 8];
            sample_loss_adjoint(norm, s, &y, &prepped.targets[i], tp, lambda_phys, &w_phys, &mut scratch)
        })
        .collect();
    pairwise_sum(&per) / batch.len() as f64
}

/// Training loss and its gradient with respect to every dense parameter.
pub fn training_loss_and_grad(
    net: &DenseNet,
    norm: &Normalization,
    batch: &[TransitionSample],
    tp: &TargetParams,
    lambda_phys: f64,
) -> (f64, Vec<f64>) {
    let prepped = prep(batch, norm);
    let idxs: Vec<usize> = (0..batch.len()).collect();
    let mut grad = vec![0.0; net.weights.len()];
    let loss = loss_and_grad_cached(
        &net.spec, &net.weights, norm, batch, &prepped, &idxs, tp, lambda_phys, &mut grad,
    );
    (loss, grad)
}

/// Core batched loss+gradient over cached features. `grad` is zeroed here.
#[allow(clippy::too_many_arguments)]
fn loss_and_grad_cached(
    spec: &MLPSpec,
    weights: &[f64],
    norm: &Normalization,
    samples: &[TransitionSample],
    prepped: &Prepped,
    idxs: &[usize],
    tp: &TargetParams,
    lambda_phys: f64,
    grad: &mut [f64],
) -> f64 {
    let net = DenseNet { spec: spec.clone(), weights: weights.to_vec() };
    let w_phys = PhysicsWeights::default();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let inv_b = 1.0 / idxs.len() as f64;
    let per: Vec<f64> = idxs
        .iter()
        .map(|&i| {
            let acts = net.forward_cached(&prepped.inputs[i]).expect("feature width fixed");
            let y = acts.a.last().unwrap().clone();
            let mut dl_dy = [0.0; 8];
            let l = sample_loss_adjoint(
                norm, &samples[i], &y, &prepped.targets[i], tp, lambda_phys, &w_phys, &mut dl_dy,
            );
            for v in dl_dy.iter_mut() {
                *v *= inv_b;
            }
            net.backward_into(&acts, &dl_dy, grad);
            l
        })
        .collect();
    pairwise_sum(&per) * inv_b
}

/// Sum of squared deviations of each parameter from its pool mean — the
/// regularizer that herds weights into clusterable groups during
/// distillation.
pub fn dispersion_penalty(spec: &MLPSpec, weights: &[f64]) -> f64 {
    let mut total = 0.0;
    for p in super::pool_layout(spec) {
        let pool = &weights[p.offset..p.offset + p.len];
        let mean = pool.iter().sum::<f64>() / p.len as f64;
        total += pool.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>();
    }
    total
}

fn dispersion_grad_into(spec: &MLPSpec, weights: &[f64], scale: f64, grad: &mut [f64]) {
    for p in super::pool_layout(spec) {
        let pool = &weights[p.offset..p.offset + p.len];
        let mean = pool.iter().sum::<f64>() / p.len as f64;
        for (g, w) in grad[p.offset..p.offset + p.len].iter_mut().zip(pool) {
            *g += scale * 2.0 * (w - mean);
        }
    }
}

/// Shared epoch loop: seeded shuffling, minibatch Adam, epoch-level
/// accept/revert against the full-dataset loss.
fn run_training(
    params: &mut Vec<f64>,
    cfg: &TrainConfig,
    n_samples: usize,
    mut batch_grad: impl FnMut(&[f64], &[usize]) -> Vec<f64>,
    mut full_loss: impl FnMut(&[f64]) -> f64,
) -> Result<TrainReport, SurrogateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(params.len(), cfg.lr);
    let mut best = full_loss(params);
    if !best.is_finite() {
        return Err(SurrogateError::NonFiniteLoss { context: "initial full-dataset loss".into() });
    }
    let mut best_params = params.clone();
    let mut best_adam = adam.state();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n_samples).collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let g = batch_grad(params, chunk);
            if g.iter().all(|v| v.is_finite()) {
                adam.step(params, &g);
            }
        }
        let loss = full_loss(params);
        if loss.is_finite() && loss <= best {
            best = loss;
            best_params.copy_from_slice(params);
            best_adam = adam.state();
        } else {
            params.copy_from_slice(&best_params);
            adam.restore(best_adam.clone());
            adam.lr *= 0.5;
        }
        history.push(best);
    }
    params.copy_from_slice(&best_params);
    Ok(TrainReport { final_loss: best, loss_history: history })
}

/// Stage 1: train the dense teacher on oracle transitions with the combined
/// data + physics loss. Returns the net, the fitted normalization, and the
/// loss history.
pub fn train_teacher(
    samples: &[TransitionSample],
    spec: MLPSpec,
    cfg: &TrainConfig,
    tp: &TargetParams,
) -> Result<(DenseNet, Normalization, TrainReport), SurrogateError> {
    if samples.len() < MIN_DATASET {
        return Err(SurrogateError::DatasetTooSmall { got: samples.len(), need: MIN_DATASET });
    }
    let norm = Normalization::fit(samples);
    let prepped = prep(samples, &norm);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xC0FFEE);
    let mut net = DenseNet::init(spec.clone(), &mut rng);

    let mut grad = vec![0.0; net.weights.len()];
    let report = run_training(
        &mut net.weights,
        cfg,
        samples.len(),
        |w, idxs| {
            loss_and_grad_cached(&spec, w, &norm, samples, &prepped, idxs, tp, cfg.lambda_phys, &mut grad);
            grad.clone()
        },
        |w| {
            let probe = DenseNet { spec: spec.clone(), weights: w.to_vec() };
            full_data_phys_loss(&probe, &norm, samples, &prepped, tp, cfg.lambda_phys)
        },
    )?;
    Ok((net, norm, report))
}

fn full_data_phys_loss(
    net: &DenseNet,
    norm: &Normalization,
    samples: &[TransitionSample],
    prepped: &Prepped,
    tp: &TargetParams,
    lambda_phys: f64,
) -> f64 {
    let w_phys = PhysicsWeights::default();
    let per: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let y = net.forward(&prepped.inputs[i]).expect("feature width fixed");
            let mut scratch = [0.0; 8];
            sample_loss_adjoint(norm, s, &y, &prepped.targets[i], tp, lambda_phys, &w_phys, &mut scratch)
        })
        .collect();
    pairwise_sum(&per) / samples.len() as f64
}

/// Stage 2: distill the teacher into a student of the same architecture,
/// matching teacher outputs under the weight-dispersion penalty. The
/// student starts at the teacher's weights, so all movement is driven by
/// the regularizer's pull toward clusterable pools.
pub fn distill(
    teacher: &DenseNet,
    norm: &Normalization,
    samples: &[TransitionSample],
    cfg: &TrainConfig,
) -> Result<(DenseNet, TrainReport), SurrogateError> {
    if samples.len() < MIN_DATASET {
        return Err(SurrogateError::DatasetTooSmall { got: samples.len(), need: MIN_DATASET });
    }
    let prepped = prep(samples, norm);
    let teacher_out: Vec<Vec<f64>> = prepped
        .inputs
        .iter()
        .map(|x| teacher.forward(x).expect("feature width fixed"))
        .collect();

    let spec = teacher.spec.clone();
    let mut student = teacher.clone();
    let mut grad = vec![0.0; student.weights.len()];

    let imitation = |w: &[f64], idxs: &[usize], grad: Option<&mut Vec<f64>>| -> f64 {
        let net = DenseNet { spec: spec.clone(), weights: w.to_vec() };
        let inv_b = 1.0 / idxs.len() as f64;
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let per: Vec<f64> = idxs
            .iter()
            .map(|&i| {
                let acts = net.forward_cached(&prepped.inputs[i]).expect("feature width fixed");
                let y = acts.a.last().unwrap();
                let t = &teacher_out[i];
                let mut l = 0.0;
                let mut dl_dy = [0.0; 8];
                for d in 0..8 {
                    let e = y[d] - t[d];
                    l += e * e / 8.0;
                    dl_dy[d] = 2.0 * e / 8.0 * inv_b;
                }
                if let Some(g) = grad.as_deref_mut() {
                    net.backward_into(&acts, &dl_dy, g);
                }
                l
            })
            .collect();
        pairwise_sum(&per) * inv_b
    };

    let report = run_training(
        &mut student.weights,
        cfg,
        samples.len(),
        |w, idxs| {
            let _ = imitation(w, idxs, Some(&mut grad));
            dispersion_grad_into(&spec, w, cfg.lambda_param, &mut grad);
            grad.clone()
        },
        |w| {
            let all: Vec<usize> = (0..samples.len()).collect();
            imitation(w, &all, None) + cfg.lambda_param * dispersion_penalty(&spec, w)
        },
    )?;
    Ok((student, report))
}

/// Stage 4: optimize only the free parameters, with dense-weight gradients
/// pulled back through the relation matrix.
pub fn finetune(
    pico: &PicoNet,
    norm: &Normalization,
    samples: &[TransitionSample],
    cfg: &TrainConfig,
    tp: &TargetParams,
) -> Result<(PicoNet, TrainReport), SurrogateError> {
    if samples.len() < MIN_DATASET {
        return Err(SurrogateError::DatasetTooSmall { got: samples.len(), need: MIN_DATASET });
    }
    let prepped = prep(samples, norm);
    let spec = pico.spec.clone();
    let relation = pico.relation.clone();
    let mut theta = pico.theta.theta.clone();
    let mut grad_w = vec![0.0; relation.assignments.len()];

    let report = run_training(
        &mut theta,
        cfg,
        samples.len(),
        |t, idxs| {
            let w = reconstruct(&relation, &super::FreeParams { theta: t.to_vec() })
                .expect("theta sized by relation");
            loss_and_grad_cached(&spec, &w, norm, samples, &prepped, idxs, tp, cfg.lambda_phys, &mut grad_w);
            pullback(&relation, &grad_w)
        },
        |t| {
            let w = reconstruct(&relation, &super::FreeParams { theta: t.to_vec() })
                .expect("theta sized by relation");
            let probe = DenseNet { spec: spec.clone(), weights: w };
            full_data_phys_loss(&probe, norm, samples, &prepped, tp, cfg.lambda_phys)
        },
    )?;
    Ok((
        PicoNet { spec, relation, theta: super::FreeParams { theta } },
        report,
    ))
}
