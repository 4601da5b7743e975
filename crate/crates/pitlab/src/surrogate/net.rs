//! Dense tanh MLP: flat weight storage, forward pass, cached
//! forward/backward for training, and the architecture solver that picks
//! hidden widths to hit an exact parameter count.

use super::SurrogateError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MLPSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
}

impl MLPSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        let s = Self { input_dim, hidden_dims, output_dim };
        assert!(s.layer_dims().iter().all(|&d| d >= 1), "all dims must be >= 1");
        s
    }

    /// Dimensions of the layer chain: input, hidden..., output.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        dims
    }

    pub fn n_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    /// Total weights + biases over all layers.
    pub fn param_count(&self) -> usize {
        self.layer_dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Solve for two hidden widths `(h1, h2)` such that the MLP
/// `input -> h1 -> h2 -> output` has exactly `total` parameters; among exact
/// solutions, the pair with the smallest width imbalance |h1 - h2| is chosen
/// (ties: smaller h1). Returns `None` when no exact two-hidden-layer
/// architecture exists.
pub fn solve_hidden_dims(input_dim: usize, output_dim: usize, total: usize) -> Option<(usize, usize)> {
    // param_count = (input+1) h1 + (h1 + output + 1) h2 + output
    let mut best: Option<(usize, usize)> = None;
    for h1 in 1.. {
        let used = (input_dim + 1) * h1 + output_dim;
        if used + (h1 + output_dim + 1) > total {
            break;
        }
        let num = total - used;
        let den = h1 + output_dim + 1;
        if num % den == 0 {
            let h2 = num / den;
            if h2 >= 1 {
                let better = match best {
                    None => true,
                    Some((b1, b2)) => {
                        let d_new = h1.abs_diff(h2);
                        let d_old = b1.abs_diff(b2);
                        d_new < d_old || (d_new == d_old && h1 < b1)
                    }
                };
                if better {
                    best = Some((h1, h2));
                }
            }
        }
    }
    best
}

/// Fully materialized network: spec plus a flat parameter vector laid out
/// layer by layer as `[W1 row-major, b1, W2, b2, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub spec: MLPSpec,
    pub weights: Vec<f64>,
}

/// Cached per-layer activations from a forward pass; `a[0]` is the input,
/// `a[l]` the post-activation output of layer `l`.
pub struct Activations {
    pub a: Vec<Vec<f64>>,
}

impl DenseNet {
    pub fn zeros(spec: MLPSpec) -> Self {
        let n = spec.param_count();
        Self { spec, weights: vec![0.0; n] }
    }

    /// Xavier-uniform initialization (matched to tanh activations).
    pub fn init(spec: MLPSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut weights = Vec::with_capacity(spec.param_count());
        for w in spec.layer_dims().windows(2) {
            let (d_in, d_out) = (w[0], w[1]);
            let bound = (6.0 / (d_in + d_out) as f64).sqrt();
            for _ in 0..d_in * d_out {
                weights.push(rng.gen_range(-bound..bound));
            }
            weights.extend(std::iter::repeat(0.0).take(d_out));
        }
        Self { spec, weights }
    }

    /// Plain forward pass: tanh on hidden layers, linear output layer.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        if input.len() != self.spec.input_dim {
            return Err(SurrogateError::DimensionMismatch {
                expected: self.spec.input_dim,
                got: input.len(),
            });
        }
        let dims = self.spec.layer_dims();
        let n_layers = self.spec.n_layers();
        let mut a = input.to_vec();
        let mut off = 0;
        for l in 0..n_layers {
            let (d_in, d_out) = (dims[l], dims[l + 1]);
            let w = &self.weights[off..off + d_in * d_out];
            let b = &self.weights[off + d_in * d_out..off + d_in * d_out + d_out];
            let mut z = vec![0.0; d_out];
            for r in 0..d_out {
                let row = &w[r * d_in..(r + 1) * d_in];
                let mut acc = b[r];
                for c in 0..d_in {
                    acc += row[c] * a[c];
                }
                z[r] = if l + 1 < n_layers { acc.tanh() } else { acc };
            }
            a = z;
            off += d_in * d_out + d_out;
        }
        Ok(a)
    }

    /// Forward pass retaining every layer's post-activation output for a
    /// subsequent backward sweep.
    pub fn forward_cached(&self, input: &[f64]) -> Result<Activations, SurrogateError> {
        if input.len() != self.spec.input_dim {
            return Err(SurrogateError::DimensionMismatch {
                expected: self.spec.input_dim,
                got: input.len(),
            });
        }
        let dims = self.spec.layer_dims();
        let n_layers = self.spec.n_layers();
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (d_in, d_out) = (dims[l], dims[l + 1]);
            let w = &self.weights[off..off + d_in * d_out];
            let b = &self.weights[off + d_in * d_out..off + d_in * d_out + d_out];
            let prev = &acts[l];
            let mut z = vec![0.0; d_out];
            for r in 0..d_out {
                let row = &w[r * d_in..(r + 1) * d_in];
                let mut acc = b[r];
                for c in 0..d_in {
                    acc += row[c] * prev[c];
                }
                z[r] = if l + 1 < n_layers { acc.tanh() } else { acc };
            }
            acts.push(z);
            off += d_in * d_out + d_out;
        }
        Ok(Activations { a: acts })
    }

    /// Reverse sweep from an output adjoint. Accumulates parameter gradients
    /// into `grad_w` (same layout as `weights`; caller zeroes) and returns
    /// the adjoint of the input vector.
    pub fn backward_into(&self, acts: &Activations, dl_dy: &[f64], grad_w: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad_w.len(), self.weights.len());
        assert_eq!(dl_dy.len(), self.spec.output_dim);
        let dims = self.spec.layer_dims();
        let n_layers = self.spec.n_layers();

        // Per-layer parameter offsets.
        let mut offs = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offs.push(off);
            off += dims[l] * dims[l + 1] + dims[l + 1];
        }

        let mut delta = dl_dy.to_vec(); // adjoint of layer l's post-activation
        for l in (0..n_layers).rev() {
            let (d_in, d_out) = (dims[l], dims[l + 1]);
            let off = offs[l];
            let prev = &acts.a[l];
            let out = &acts.a[l + 1];
            // Through the activation: hidden layers are tanh, output linear.
            let mut dz = delta;
            if l + 1 < n_layers {
                for r in 0..d_out {
                    dz[r] *= 1.0 - out[r] * out[r];
                }
            }
            let w = &self.weights[off..off + d_in * d_out];
            let (gw, gb) = grad_w[off..off + d_in * d_out + d_out].split_at_mut(d_in * d_out);
            let mut d_prev = vec![0.0; d_in];
            for r in 0..d_out {
                let row = &w[r * d_in..(r + 1) * d_in];
                let grow = &mut gw[r * d_in..(r + 1) * d_in];
                let dzr = dz[r];
                gb[r] += dzr;
                for c in 0..d_in {
                    grow[c] += dzr * prev[c];
                    d_prev[c] += dzr * row[c];
                }
            }
            delta = d_prev;
        }
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::finite_diff_gradient;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    #[test]
    fn param_count_matches_counting_formula() {
        // 2 -> 3 -> 1: 2*3 + 3 + 3*1 + 1 = 13.
        assert_eq!(MLPSpec::new(2, vec![3], 1).param_count(), 13);
        assert_eq!(MLPSpec::new(12, vec![17, 336], 8).param_count(), 8965);
    }

    #[test]
    fn hidden_width_solver_hits_exact_count() {
        // (input+1) h1 + (h1+output+1) h2 + output = 8965 with input 12,
        // output 8 reduces to (h1+9) | 9074 = 2 * 13 * 349, giving candidate
        // pairs (4, 685), (17, 336), (340, 13); the balance rule picks
        // (17, 336).
        let (h1, h2) = solve_hidden_dims(12, 8, 8965).unwrap();
        assert_eq!((h1, h2), (17, 336));
        assert_eq!(MLPSpec::new(12, vec![h1, h2], 8).param_count(), 8965);
        // A count with no exact architecture (too small to fit any pair).
        assert_eq!(solve_hidden_dims(12, 8, 23), None);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let net = DenseNet::zeros(MLPSpec::new(4, vec![5, 3], 2));
        let y = net.forward(&[1.0, -2.0, 0.5, 3.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn single_linear_layer_passes_input_through() {
        // Identity weight matrix, zero bias, no hidden layer: y = x.
        let spec = MLPSpec::new(3, vec![], 3);
        let mut net = DenseNet::zeros(spec);
        for i in 0..3 {
            net.weights[i * 3 + i] = 1.0;
        }
        let y = net.forward(&[0.3, -0.7, 2.0]).unwrap();
        assert_eq!(y, vec![0.3, -0.7, 2.0]);
    }

    #[test]
    fn forward_matches_naive_matmul_oracle() {
        let spec = MLPSpec::new(3, vec![4], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = DenseNet::init(spec, &mut rng);
        let x = [0.2, -1.3, 0.8];

        // Hand-rolled: h = tanh(W1 x + b1), y = W2 h + b2.
        let w1 = &net.weights[0..12];
        let b1 = &net.weights[12..16];
        let w2 = &net.weights[16..24];
        let b2 = &net.weights[24..26];
        let mut h = [0.0; 4];
        for r in 0..4 {
            let mut acc = b1[r];
            for c in 0..3 {
                acc += w1[r * 3 + c] * x[c];
            }
            h[r] = acc.tanh();
        }
        let mut y = [0.0; 2];
        for r in 0..2 {
            let mut acc = b2[r];
            for c in 0..4 {
                acc += w2[r * 4 + c] * h[c];
            }
            y[r] = acc;
        }

        let got = net.forward(&x).unwrap();
        assert_abs_diff_eq!(got[0], y[0], epsilon = 1e-12);
        assert_abs_diff_eq!(got[1], y[1], epsilon = 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let spec = MLPSpec::new(3, vec![4, 3], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = DenseNet::init(spec.clone(), &mut rng);
        let x = [0.4, -0.2, 0.9];
        // Scalar objective: weighted sum of outputs (fixed adjoint).
        let adjoint = [0.7, -1.3];
        let loss = |w: &[f64]| {
            let n = DenseNet { spec: spec.clone(), weights: w.to_vec() };
            let y = n.forward(&x).unwrap();
            y[0] * adjoint[0] + y[1] * adjoint[1]
        };

        let acts = net.forward_cached(&x).unwrap();
        let mut grad = vec![0.0; net.weights.len()];
        let d_input = net.backward_into(&acts, &adjoint, &mut grad);

        let fd = finite_diff_gradient(|w| loss(w), &net.weights, 1e-6);
        for (i, (&g, &f)) in grad.iter().zip(&fd).enumerate() {
            assert_abs_diff_eq!(g, f, epsilon = 1e-6 * (1.0 + f.abs()));
            let _ = i;
        }

        // Input adjoint against finite differences in x.
        let loss_x = |xv: &[f64]| {
            let y = net.forward(xv).unwrap();
            y[0] * adjoint[0] + y[1] * adjoint[1]
        };
        let fd_x = finite_diff_gradient(loss_x, &x, 1e-6);
        for (&g, &f) in d_input.iter().zip(&fd_x) {
            assert_abs_diff_eq!(g, f, epsilon = 1e-7 * (1.0 + f.abs()));
        }
    }
}
