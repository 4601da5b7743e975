//! Feature and target normalization. State features are standardized with
//! per-dimension statistics fitted on the training set; force features share
//! one fixed scale so corridor bounds stay interpretable in newtons.

use super::predict::{canonical_state, target_increments};
use super::TransitionSample;
use serde::{Deserialize, Serialize};

/// Fixed normalization scale for contact-force features (N).
pub const FORCE_SCALE: f64 = 1.0e4;

/// Dimensions whose sample standard deviation falls below this are treated
/// as degenerate (constant) and given unit scale. The pose dimensions are
/// always degenerate because features are computed in the canonical frame.
const DEGENERATE_STD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub state_mean: [f64; 8],
    pub state_std: [f64; 8],
    pub delta_mean: [f64; 8],
    pub delta_std: [f64; 8],
}

fn moments(values: impl Iterator<Item = [f64; 8]>, n: usize) -> ([f64; 8], [f64; 8]) {
    let mut mean = [0.0; 8];
    let mut m2 = [0.0; 8];
    for v in values {
        for d in 0..8 {
            mean[d] += v[d];
            m2[d] += v[d] * v[d];
        }
    }
    let nf = n as f64;
    let mut std = [1.0; 8];
    for d in 0..8 {
        mean[d] /= nf;
        let var = (m2[d] / nf - mean[d] * mean[d]).max(0.0);
        let s = var.sqrt();
        std[d] = if s < DEGENERATE_STD { 1.0 } else { s };
        if s < DEGENERATE_STD {
            mean[d] = 0.0;
        }
    }
    (mean, std)
}

impl Normalization {
    /// Unit scales, zero shifts — used by tests that want raw increments.
    pub fn identity() -> Self {
        Self { state_mean: [0.0; 8], state_std: [1.0; 8], delta_mean: [0.0; 8], delta_std: [1.0; 8] }
    }

    /// Fit per-dimension statistics of canonical states and target
    /// increments over the training set.
    pub fn fit(samples: &[TransitionSample]) -> Self {
        assert!(!samples.is_empty(), "cannot fit normalization on an empty set");
        let n = samples.len();
        let (state_mean, state_std) = moments(samples.iter().map(|s| canonical_state(&s.x_prev)), n);
        let (delta_mean, delta_std) =
            moments(samples.iter().map(|s| target_increments(&s.x_prev, &s.x_next, s.dt)), n);
        Self { state_mean, state_std, delta_mean, delta_std }
    }

    pub fn normalize_state(&self, canon: &[f64; 8]) -> [f64; 8] {
        let mut out = [0.0; 8];
        for d in 0..8 {
            out[d] = (canon[d] - self.state_mean[d]) / self.state_std[d];
        }
        out
    }

    /// Raw canonical increment -> normalized network target.
    pub fn encode_delta(&self, delta: &[f64; 8]) -> [f64; 8] {
        let mut out = [0.0; 8];
        for d in 0..8 {
            out[d] = (delta[d] - self.delta_mean[d]) / self.delta_std[d];
        }
        out
    }

    /// Normalized network output -> raw canonical increment.
    pub fn decode_delta(&self, y: &[f64]) -> [f64; 8] {
        debug_assert_eq!(y.len(), 8);
        let mut out = [0.0; 8];
        for d in 0..8 {
            out[d] = y[d] * self.delta_std[d] + self.delta_mean[d];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TargetState;
    use approx::assert_abs_diff_eq;

    fn sample(vx: f64, vy: f64) -> TransitionSample {
        let x_prev = TargetState { vx, vy, psi: 0.3, psi_dot: 0.2, phi_dot: 0.0, phi: 0.01, x: 5.0, y: -2.0 };
        let x_next = TargetState { vx: vx - 0.05, vy: vy + 0.1, psi: 0.31, psi_dot: 0.25, phi_dot: 0.02, phi: 0.012, x: 5.0 + vx * 0.05, y: -2.0 };
        TransitionSample { x_prev, fn_hist: [1000.0, 0.0], ft_hist: [100.0, 0.0], x_next, dt: 0.05, mu: 0.8 }
    }

    #[test]
    fn encode_decode_round_trips() {
        let samples: Vec<_> = (0..20).map(|i| sample(10.0 + i as f64 * 0.3, -1.0 + i as f64 * 0.1)).collect();
        let norm = Normalization::fit(&samples);
        let delta = [0.2, -0.4, 0.01, 0.3, 0.05, -0.02, 0.003, -0.001];
        let decoded = norm.decode_delta(&norm.encode_delta(&delta));
        for d in 0..8 {
            assert_abs_diff_eq!(decoded[d], delta[d], epsilon = 1e-12);
        }
    }

    #[test]
    fn canonical_pose_dimensions_are_degenerate_with_unit_scale() {
        let samples: Vec<_> = (0..20).map(|i| sample(10.0 + i as f64 * 0.3, 0.0)).collect();
        let norm = Normalization::fit(&samples);
        // psi, x, y live at indices 2, 6, 7 of the state array and are zeroed
        // by canonicalization, so their statistics must degenerate cleanly.
        for d in [2, 6, 7] {
            assert_eq!(norm.state_mean[d], 0.0);
            assert_eq!(norm.state_std[d], 1.0);
        }
        // Non-degenerate dimension picks up real statistics.
        assert!(norm.state_std[0] > 0.5);
        assert!(norm.state_mean[0] > 10.0);
    }
}
