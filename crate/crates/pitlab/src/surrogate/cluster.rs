//! Parameter clustering and the relation matrix. Weights and biases of each
//! layer form separate pools; within a pool, scalar weight values are
//! agglomerated by complete linkage until the pool's cluster budget is
//! reached. Every dense parameter then points at a shared free parameter.

use super::{DenseNet, FreeParams, MLPSpec, PicoNet, RelationMatrix, SurrogateError};
use serde::{Deserialize, Serialize};

/// One clustering pool: a contiguous slice of the flat weight vector
/// holding either a layer's weight matrix or its bias vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    pub layer: usize,
    pub is_bias: bool,
    pub offset: usize,
    pub len: usize,
}

/// Pool decomposition of a network's flat parameter vector, in storage
/// order: `[W1, b1, W2, b2, ...]`.
pub fn pool_layout(spec: &MLPSpec) -> Vec<Pool> {
    let dims = spec.layer_dims();
    let mut pools = Vec::with_capacity(2 * spec.n_layers());
    let mut off = 0;
    for l in 0..spec.n_layers() {
        let (d_in, d_out) = (dims[l], dims[l + 1]);
        pools.push(Pool { layer: l, is_bias: false, offset: off, len: d_in * d_out });
        off += d_in * d_out;
        pools.push(Pool { layer: l, is_bias: true, offset: off, len: d_out });
        off += d_out;
    }
    pools
}

/// Apportion `n_free` cluster slots across pools proportionally to pool
/// size by the largest-remainder rule, guaranteeing at least one slot per
/// pool.
pub fn default_cluster_targets(spec: &MLPSpec, n_free: usize) -> Vec<usize> {
    let pools = pool_layout(spec);
    assert!(n_free >= pools.len(), "need at least one cluster per pool");
    let total: usize = pools.iter().map(|p| p.len).sum();
    assert!(n_free <= total, "cannot have more clusters than parameters");

    let mut targets: Vec<usize> = Vec::with_capacity(pools.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(pools.len());
    for (i, p) in pools.iter().enumerate() {
        let quota = n_free as f64 * p.len as f64 / total as f64;
        let floor = quota.floor() as usize;
        targets.push(floor.min(p.len));
        remainders.push((quota - floor as f64, i));
    }
    let mut assigned: usize = targets.iter().sum();
    // Hand out the leftover slots by descending fractional remainder
    // (ties: lower pool index).
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut k = 0;
    while assigned < n_free {
        let i = remainders[k % remainders.len()].1;
        if targets[i] < pools[i].len {
            targets[i] += 1;
            assigned += 1;
        }
        k += 1;
    }
    // Every pool needs one representative; steal from the biggest budget if
    // the apportionment left one empty.
    for i in 0..targets.len() {
        if targets[i] == 0 {
            let donor = (0..targets.len()).max_by_key(|&j| targets[j]).unwrap();
            targets[donor] -= 1;
            targets[i] = 1;
        }
    }
    targets
}

/// Complete-linkage agglomeration of scalar values down to `target`
/// clusters. Returns the cluster index of each input value, with clusters
/// numbered left-to-right in value order. For scalars, complete-linkage
/// clusters are contiguous runs in sorted order, so only adjacent runs are
/// ever merge candidates; the nearest pair (smallest merged span) merges
/// first, ties going to the leftmost pair.
fn complete_linkage_1d(values: &[f64], target: usize) -> Vec<u32> {
    let n = values.len();
    debug_assert!(target >= 1 && target <= n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();

    // Segments over the sorted sequence: half-open [start, end).
    let mut segs: Vec<(usize, usize)> = (0..n).map(|i| (i, i + 1)).collect();
    while segs.len() > target {
        let mut best = 0;
        let mut best_span = f64::INFINITY;
        for j in 0..segs.len() - 1 {
            let span = sorted[segs[j + 1].1 - 1] - sorted[segs[j].0];
            if span < best_span {
                best_span = span;
                best = j;
            }
        }
        segs[best].1 = segs[best + 1].1;
        segs.remove(best + 1);
    }

    let mut assign = vec![0u32; n];
    for (cluster, &(start, end)) in segs.iter().enumerate() {
        for &orig in &order[start..end] {
            assign[orig] = cluster as u32;
        }
    }
    assign
}

/// Cluster a trained network's parameters pool by pool. `targets` gives the
/// cluster budget of each pool in `pool_layout` order; free parameters are
/// numbered pool by pool.
pub fn cluster_parameters(net: &DenseNet, targets: &[usize]) -> Result<RelationMatrix, SurrogateError> {
    let pools = pool_layout(&net.spec);
    if targets.len() != pools.len() {
        return Err(SurrogateError::DimensionMismatch { expected: pools.len(), got: targets.len() });
    }
    for (i, (p, &t)) in pools.iter().zip(targets).enumerate() {
        if t == 0 || t > p.len {
            return Err(SurrogateError::InvalidTarget { pool: i, target: t, size: p.len });
        }
    }

    let mut assignments = vec![0u32; net.weights.len()];
    let mut base = 0u32;
    for (p, &t) in pools.iter().zip(targets) {
        let local = complete_linkage_1d(&net.weights[p.offset..p.offset + p.len], t);
        for (k, &c) in local.iter().enumerate() {
            assignments[p.offset + k] = base + c;
        }
        base += t as u32;
    }
    let r = RelationMatrix { assignments, n_free: base as usize };
    r.validate().expect("construction yields onto assignments");
    Ok(r)
}

/// Expand free parameters through the relation matrix: `w_hat[i] =
/// theta[assignments[i]]`. Exactly linear in `theta`.
pub fn reconstruct(r: &RelationMatrix, theta: &FreeParams) -> Result<Vec<f64>, SurrogateError> {
    if theta.theta.len() != r.n_free {
        return Err(SurrogateError::DimensionMismatch { expected: r.n_free, got: theta.theta.len() });
    }
    Ok(r.assignments.iter().map(|&a| theta.theta[a as usize]).collect())
}

/// Free-parameter initialization: the mean of each cluster's dense weights.
pub fn init_theta(r: &RelationMatrix, weights: &[f64]) -> FreeParams {
    assert_eq!(weights.len(), r.assignments.len());
    let mut sum = vec![0.0; r.n_free];
    let mut count = vec![0usize; r.n_free];
    for (&a, &w) in r.assignments.iter().zip(weights) {
        sum[a as usize] += w;
        count[a as usize] += 1;
    }
    FreeParams { theta: sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect() }
}

/// Pull a dense-weight gradient back to free-parameter space: `g_theta =
/// R^T g_w`, i.e. each cluster's gradient is the sum of its members'.
pub fn pullback(r: &RelationMatrix, grad_w: &[f64]) -> Vec<f64> {
    assert_eq!(grad_w.len(), r.assignments.len());
    let mut g = vec![0.0; r.n_free];
    for (&a, &gw) in r.assignments.iter().zip(grad_w) {
        g[a as usize] += gw;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub teacher_count: usize,
    pub free_count: usize,
    pub ratio: f64,
}

/// Compression summary of a teacher / compressed pair.
pub fn param_report(teacher: &DenseNet, pico: &PicoNet) -> ParamReport {
    let teacher_count = teacher.spec.param_count();
    let free_count = pico.relation.n_free;
    ParamReport { teacher_count, free_count, ratio: teacher_count as f64 / free_count as f64 }
}
