//! Reverse-mode tape. Graphs are built by ordinary arithmetic on [`Var`]
//! handles; building also evaluates, so the forward value of any node is
//! available immediately. A finished graph is wrapped in a
//! [`CompiledProblem`] which supports cheap re-evaluation at new inputs
//! (replay) and reverse sweeps for gradients.

use super::OptimError;
use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

#[derive(Debug, Clone)]
enum Node {
    Input,
    Const(f64),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    /// `a * x + b` with immediate coefficients.
    MulAdd(u32, f64, f64),
    Sin(u32),
    Cos(u32),
    Tanh(u32),
    Exp(u32),
    Sqrt(u32),
    Atan2(u32, u32),
    Softplus(u32),
    /// `max(0, x)` with zero subgradient at the kink.
    Max0(u32),
    /// Dense row: `bias + dot(weights[row_start..], vals[list])`.
    Affine { list: u32, wtab: u32, row_start: u32, bias: f64 },
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    vals: Vec<f64>,
    wtabs: Vec<Arc<Vec<f64>>>,
    lists: Vec<Box<[u32]>>,
    n_inputs: usize,
    affine_macs: u64,
}

/// Numerically stable `ln(1 + e^x)`.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    0.5 * (1.0 + (0.5 * x).tanh())
}

impl Inner {
    fn compute(&self, node: &Node) -> f64 {
        match *node {
            Node::Input => 0.0,
            Node::Const(c) => c,
            Node::Add(a, b) => self.vals[a as usize] + self.vals[b as usize],
            Node::Sub(a, b) => self.vals[a as usize] - self.vals[b as usize],
            Node::Mul(a, b) => self.vals[a as usize] * self.vals[b as usize],
            Node::Div(a, b) => self.vals[a as usize] / self.vals[b as usize],
            Node::MulAdd(x, a, b) => a * self.vals[x as usize] + b,
            Node::Sin(x) => self.vals[x as usize].sin(),
            Node::Cos(x) => self.vals[x as usize].cos(),
            Node::Tanh(x) => self.vals[x as usize].tanh(),
            Node::Exp(x) => self.vals[x as usize].exp(),
            Node::Sqrt(x) => self.vals[x as usize].sqrt(),
            Node::Atan2(y, x) => self.vals[y as usize].atan2(self.vals[x as usize]),
            Node::Softplus(x) => softplus(self.vals[x as usize]),
            Node::Max0(x) => self.vals[x as usize].max(0.0),
            Node::Affine { list, wtab, row_start, bias } => {
                let idxs = &self.lists[list as usize];
                let w = &self.wtabs[wtab as usize][row_start as usize..row_start as usize + idxs.len()];
                let mut acc = bias;
                for (k, &ix) in idxs.iter().enumerate() {
                    acc += w[k] * self.vals[ix as usize];
                }
                acc
            }
        }
    }

    fn push(&mut self, node: Node) -> u32 {
        let v = self.compute(&node);
        let ix = self.nodes.len() as u32;
        self.nodes.push(node);
        self.vals.push(v);
        ix
    }
}

/// Graph under construction. Create with [`Tape::new`], mint inputs, build
/// arithmetic with [`Var`] operations, then seal with
/// [`CompiledProblem::new`].
pub struct Tape {
    inner: RefCell<Inner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { inner: RefCell::new(Inner::default()) }
    }

    /// Mint the problem inputs (must be called before any other node).
    pub fn inputs(&self, x0: &[f64]) -> Vec<Var<'_>> {
        let mut inner = self.inner.borrow_mut();
        assert!(inner.nodes.is_empty(), "inputs must be the first nodes on the tape");
        inner.n_inputs = x0.len();
        x0.iter()
            .map(|&v| {
                let ix = inner.push(Node::Input);
                inner.vals[ix as usize] = v;
                ix
            })
            .collect::<Vec<_>>()
            .into_iter()
            .map(|ix| Var { tape: self, ix })
            .collect()
    }

    pub fn constant(&self, c: f64) -> Var<'_> {
        Var { tape: self, ix: self.inner.borrow_mut().push(Node::Const(c)) }
    }

    /// Register a weight table (a flattened row-major matrix) shared by many
    /// affine rows.
    pub fn weights(&self, w: Arc<Vec<f64>>) -> u32 {
        let mut inner = self.inner.borrow_mut();
        inner.wtabs.push(w);
        (inner.wtabs.len() - 1) as u32
    }

    /// Emit one affine node per row: `bias[r] + dot(w[r, :], inputs)` where
    /// the weight table was registered with [`Tape::weights`] and holds
    /// `biases.len() x inputs.len()` coefficients starting at `offset`.
    pub fn affine_layer<'t>(&'t self, wtab: u32, offset: usize, inputs: &[Var<'t>], biases: &[f64]) -> Vec<Var<'t>> {
        let mut inner = self.inner.borrow_mut();
        let list: Box<[u32]> = inputs.iter().map(|v| v.ix).collect();
        let n_in = list.len();
        debug_assert!(inner.wtabs[wtab as usize].len() >= offset + biases.len() * n_in);
        inner.lists.push(list);
        let list_ix = (inner.lists.len() - 1) as u32;
        inner.affine_macs += (biases.len() * n_in) as u64;
        biases
            .iter()
            .enumerate()
            .map(|(r, &b)| {
                inner.push(Node::Affine {
                    list: list_ix,
                    wtab,
                    row_start: (offset + r * n_in) as u32,
                    bias: b,
                })
            })
            .collect::<Vec<_>>()
            .into_iter()
            .map(|ix| Var { tape: self, ix })
            .collect()
    }

    fn push(&self, node: Node) -> u32 {
        self.inner.borrow_mut().push(node)
    }

    fn val(&self, ix: u32) -> f64 {
        self.inner.borrow().vals[ix as usize]
    }
}

/// A handle to one tape node. Copyable; all arithmetic allocates new nodes.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    ix: u32,
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.tape.val(self.ix)
    }

    pub fn index(self) -> u32 {
        self.ix
    }

    pub fn sin(self) -> Self {
        Self { tape: self.tape, ix: self.tape.push(Node::Sin(self.ix)) }
    }

    pub fn cos(self) -> Self {
        Self { tape: self.tape, ix: self.tape.push(Node::Cos(self.ix)) }
    }

    pub fn tanh(self) -> Self {
        Self { tape: self.tape, ix: self.tape.push(Node::Tanh(self.ix)) }
    }

    pub fn exp(self) -> Self {
        Self { tape: self.tape, ix: self.tape.push(Node::Exp(self.ix)) }
    }

    pub fn sqrt(self) -> Self {
        Self { tape: self.tape, ix: self.tape.push(Node::Sqrt(self.ix)) }
    }

    pub fn atan2(self, x: Var<'t>) -> Self {
        Self { tape: self.tape, ix: self.tape.push(Node::Atan2(self.ix, x.ix)) }
    }

    pub fn softplus(self) -> Self {
        Self { tape: self.tape, ix: self.tape.push(Node::Softplus(self.ix)) }
    }

    pub fn max0(self) -> Self {
        Self { tape: self.tape, ix: self.tape.push(Node::Max0(self.ix)) }
    }

    /// `a * self + b` as a single node.
    pub fn mul_add_c(self, a: f64, b: f64) -> Self {
        Self { tape: self.tape, ix: self.tape.push(Node::MulAdd(self.ix, a, b)) }
    }

    pub fn square(self) -> Self {
        self * self
    }

    /// Smooth symmetric saturation `limit * tanh(x / limit)`; the
    /// differentiable stand-in for a hard clamp at `+-limit`.
    pub fn sat(self, limit: f64) -> Self {
        self.mul_add_c(1.0 / limit, 0.0).tanh().mul_add_c(limit, 0.0)
    }

    /// Softplus-squared one-sided penalty for the constraint `self <= margin`;
    /// C-infinity, ~0 deep inside the feasible region, quadratic outside.
    pub fn smooth_hinge(self, margin: f64, sharpness: f64) -> Self {
        let s = self.mul_add_c(sharpness, -sharpness * margin).softplus().mul_add_c(1.0 / sharpness, 0.0);
        s * s
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        debug_assert!(std::ptr::eq(self.tape, rhs.tape));
        Self { tape: self.tape, ix: self.tape.push(Node::Add(self.ix, rhs.ix)) }
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        Self { tape: self.tape, ix: self.tape.push(Node::Sub(self.ix, rhs.ix)) }
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        Self { tape: self.tape, ix: self.tape.push(Node::Mul(self.ix, rhs.ix)) }
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        Self { tape: self.tape, ix: self.tape.push(Node::Div(self.ix, rhs.ix)) }
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.mul_add_c(-1.0, 0.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.mul_add_c(1.0, rhs)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.mul_add_c(1.0, -rhs)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.mul_add_c(rhs, 0.0)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs.mul_add_c(1.0, self)
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.mul_add_c(-1.0, self)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs.mul_add_c(self, 0.0)
    }
}

/// A sealed graph: inputs, one scalar output, replayable forward and
/// reverse sweeps, and work counters for the deterministic runtime model.
pub struct CompiledProblem {
    inner: Inner,
    output: u32,
    adj: Vec<f64>,
    pub n_value_evals: u64,
    pub n_grad_evals: u64,
}

impl CompiledProblem {
    /// Seal the tape with the node at `output` (see [`Var::index`]) as the
    /// scalar objective.
    pub fn new(tape: Tape, output: u32) -> Self {
        let inner = tape.inner.into_inner();
        let n = inner.nodes.len();
        assert!((output as usize) < n, "output node out of range");
        Self { inner, output, adj: vec![0.0; n], n_value_evals: 0, n_grad_evals: 0 }
    }

    pub fn dim(&self) -> usize {
        self.inner.n_inputs
    }

    pub fn node_count(&self) -> usize {
        self.inner.nodes.len()
    }

    /// Work per forward sweep in fused multiply-add-ish units; used by the
    /// deterministic runtime model.
    pub fn flops_per_eval(&self) -> u64 {
        self.inner.nodes.len() as u64 + 2 * self.inner.affine_macs
    }

    fn replay(&mut self, x: &[f64]) {
        let inner = &mut self.inner;
        for i in 0..inner.nodes.len() {
            let v = match inner.nodes[i] {
                Node::Input => x[i],
                ref node => inner.compute(node),
            };
            inner.vals[i] = v;
        }
    }

    /// Forward value at `x` (replay; no allocation).
    pub fn eval(&mut self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.inner.n_inputs);
        self.n_value_evals += 1;
        self.replay(x);
        self.inner.vals[self.output as usize]
    }

    /// Forward + reverse sweep: cost and gradient with respect to the inputs.
    pub fn eval_grad(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), OptimError> {
        if x.len() != self.inner.n_inputs {
            return Err(OptimError::DimensionMismatch { expected: self.inner.n_inputs, got: x.len() });
        }
        self.n_grad_evals += 1;
        self.replay(x);
        let f = self.inner.vals[self.output as usize];
        if !f.is_finite() {
            return Err(OptimError::NonFiniteValue { context: "rollout cost" });
        }

        let inner = &self.inner;
        let adj = &mut self.adj;
        adj.iter_mut().for_each(|a| *a = 0.0);
        adj[self.output as usize] = 1.0;

        for i in (0..inner.nodes.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            match inner.nodes[i] {
                Node::Input | Node::Const(_) => {}
                Node::Add(x1, x2) => {
                    adj[x1 as usize] += a;
                    adj[x2 as usize] += a;
                }
                Node::Sub(x1, x2) => {
                    adj[x1 as usize] += a;
                    adj[x2 as usize] -= a;
                }
                Node::Mul(x1, x2) => {
                    adj[x1 as usize] += a * inner.vals[x2 as usize];
                    adj[x2 as usize] += a * inner.vals[x1 as usize];
                }
                Node::Div(x1, x2) => {
                    let d = inner.vals[x2 as usize];
                    adj[x1 as usize] += a / d;
                    adj[x2 as usize] -= a * inner.vals[i] / d;
                }
                Node::MulAdd(x1, c, _) => adj[x1 as usize] += a * c,
                Node::Sin(x1) => adj[x1 as usize] += a * inner.vals[x1 as usize].cos(),
                Node::Cos(x1) => adj[x1 as usize] -= a * inner.vals[x1 as usize].sin(),
                Node::Tanh(x1) => {
                    let y = inner.vals[i];
                    adj[x1 as usize] += a * (1.0 - y * y);
                }
                Node::Exp(x1) => adj[x1 as usize] += a * inner.vals[i],
                Node::Sqrt(x1) => adj[x1 as usize] += a * 0.5 / inner.vals[i],
                Node::Atan2(y, x1) => {
                    let yy = inner.vals[y as usize];
                    let xx = inner.vals[x1 as usize];
                    let denom = xx * xx + yy * yy;
                    adj[y as usize] += a * xx / denom;
                    adj[x1 as usize] -= a * yy / denom;
                }
                Node::Softplus(x1) => adj[x1 as usize] += a * sigmoid(inner.vals[x1 as usize]),
                Node::Max0(x1) => {
                    if inner.vals[x1 as usize] > 0.0 {
                        adj[x1 as usize] += a;
                    }
                }
                Node::Affine { list, wtab, row_start, .. } => {
                    let idxs = &inner.lists[list as usize];
                    let w = &inner.wtabs[wtab as usize][row_start as usize..row_start as usize + idxs.len()];
                    for (k, &ix) in idxs.iter().enumerate() {
                        adj[ix as usize] += a * w[k];
                    }
                }
            }
        }
        let grad = adj[..inner.n_inputs].to_vec();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteValue { context: "rollout gradient" });
        }
        Ok((f, grad))
    }
}
