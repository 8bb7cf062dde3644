//! Reverse-mode differentiation over a recorded operation tape.
//!
//! Every primitive appends one node holding its forward value. `backward`
//! walks the nodes in reverse and accumulates adjoints; `replay` recomputes
//! every non-leaf value from the leaves through the same kernels, which is how
//! the forward values are audited.

use super::params::{ParamId, ParamStore};
use super::tensor::{matmul_nt, matmul_raw, matmul_tn, Tensor};
use super::MathError;
use crate::physics;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Recorded primitive. Leaves carry no inputs.
#[derive(Debug, Clone)]
pub enum Op {
    /// Differentiable leaf (inputs under test, e.g. gradient checks).
    Input,
    /// Non-differentiable leaf: data, targets, dropout masks.
    Constant,
    /// Leaf bound to a parameter of a [`ParamStore`].
    Param(ParamId),
    MatMul(Var, Var),
    /// Elementwise sum. The right operand may be a row broadcast over the
    /// rows of the left operand, or a single value.
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    /// `x * scale + shift`
    Affine(Var, f64, f64),
    /// Concatenation along the last axis.
    Concat(Vec<Var>),
    /// Columns `start..start + len` of a matrix.
    SliceCols(Var, usize, usize),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    /// ELU with alpha = 1.
    Elu(Var),
    Sum(Var),
    Mean(Var),
    Square(Var),
    Sqrt(Var),
    /// Water density (kg/m³) from temperature (°C).
    Density(Var),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Hadamard(..) => "hadamard",
            Op::Scale(..) => "scale",
            Op::Affine(..) => "affine",
            Op::Concat(_) => "concat",
            Op::SliceCols(..) => "slice_cols",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Elu(_) => "elu",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Square(_) => "square",
            Op::Sqrt(_) => "sqrt",
            Op::Density(_) => "density",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Input | Op::Constant | Op::Param(_) => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Hadamard(a, b) => {
                vec![*a, *b]
            }
            Op::Concat(parts) => parts.clone(),
            Op::Scale(a, _)
            | Op::Affine(a, ..)
            | Op::SliceCols(a, ..)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Elu(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Square(a)
            | Op::Sqrt(a)
            | Op::Density(a) => vec![*a],
        }
    }

    fn is_leaf(&self) -> bool {
        matches!(self, Op::Input | Op::Constant | Op::Param(_))
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

fn broadcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast, MathError> {
    if a.shape() == b.shape() {
        Ok(Broadcast::Same)
    } else if b.len() == 1 {
        Ok(Broadcast::Scalar)
    } else if b.rows() == 1 && b.len() == a.cols() && a.shape().len() == 2 {
        Ok(Broadcast::Row)
    } else {
        Err(MathError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        })
    }
}

fn zip_broadcast(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor, MathError> {
    let kind = broadcast_kind(op, a, b)?;
    let bd = b.data();
    let cols = a.cols();
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let y = match kind {
                Broadcast::Same => bd[i],
                Broadcast::Row => bd[i % cols],
                Broadcast::Scalar => bd[0],
            };
            f(x, y)
        })
        .collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

/// Reduces an adjoint of the broadcast result back onto the right operand.
fn reduce_broadcast(kind: Broadcast, g: &[f64], b_len: usize, cols: usize) -> Vec<f64> {
    match kind {
        Broadcast::Same => g.to_vec(),
        Broadcast::Scalar => vec![g.iter().sum()],
        Broadcast::Row => {
            let mut out = vec![0.0; b_len];
            for (i, &v) in g.iter().enumerate() {
                out[i % cols] += v;
            }
            out
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Forward kernel shared by recording and replay.
fn eval<'a>(op: &Op, value: impl Fn(Var) -> &'a Tensor) -> Result<Tensor, MathError> {
    let out = match op {
        Op::Input | Op::Constant | Op::Param(_) => {
            return Err(MathError::InvalidNode("leaf has no kernel"))
        }
        Op::MatMul(a, b) => {
            let (a, b) = (value(*a), value(*b));
            if a.shape().len() > 2 || b.shape().len() != 2 || a.cols() != b.rows() {
                return Err(MathError::ShapeMismatch {
                    op: "matmul",
                    left: a.shape().to_vec(),
                    right: b.shape().to_vec(),
                });
            }
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            Tensor::from_parts(vec![m, n], matmul_raw(a.data(), b.data(), m, k, n))
        }
        Op::Add(a, b) => zip_broadcast("add", value(*a), value(*b), |x, y| x + y)?,
        Op::Sub(a, b) => zip_broadcast("sub", value(*a), value(*b), |x, y| x - y)?,
        Op::Hadamard(a, b) => {
            let (a, b) = (value(*a), value(*b));
            if a.shape() != b.shape() {
                return Err(MathError::ShapeMismatch {
                    op: "hadamard",
                    left: a.shape().to_vec(),
                    right: b.shape().to_vec(),
                });
            }
            let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
            Tensor::from_parts(a.shape().to_vec(), data)
        }
        Op::Scale(a, c) => value(*a).map(|x| x * c),
        Op::Affine(a, s, t) => value(*a).map(|x| x * s + t),
        Op::Concat(parts) => {
            if parts.is_empty() {
                return Err(MathError::InvalidNode("concat of nothing"));
            }
            let vals: Vec<&Tensor> = parts.iter().map(|&p| value(p)).collect();
            let rows = vals[0].rows();
            for v in &vals {
                if v.rows() != rows || v.shape().len() > 2 {
                    return Err(MathError::ShapeMismatch {
                        op: "concat",
                        left: vals[0].shape().to_vec(),
                        right: v.shape().to_vec(),
                    });
                }
            }
            let total: usize = vals.iter().map(|v| v.cols()).sum();
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for v in &vals {
                    data.extend_from_slice(v.row(r));
                }
            }
            let shape = if vals.iter().all(|v| v.shape().len() <= 1) {
                vec![total]
            } else {
                vec![rows, total]
            };
            Tensor::from_parts(shape, data)
        }
        Op::SliceCols(a, start, len) => {
            let a = value(*a);
            if a.shape().len() != 2 || start + len > a.cols() || *len == 0 {
                return Err(MathError::ShapeMismatch {
                    op: "slice_cols",
                    left: a.shape().to_vec(),
                    right: vec![*start, *len],
                });
            }
            let mut data = Vec::with_capacity(a.rows() * len);
            for r in 0..a.rows() {
                data.extend_from_slice(&a.row(r)[*start..start + len]);
            }
            Tensor::from_parts(vec![a.rows(), *len], data)
        }
        Op::Sigmoid(a) => value(*a).map(sigmoid),
        Op::Tanh(a) => value(*a).map(f64::tanh),
        Op::Relu(a) => value(*a).map(|x| if x > 0.0 { x } else { 0.0 }),
        Op::Elu(a) => value(*a).map(elu),
        Op::Sum(a) => Tensor::scalar(value(*a).data().iter().sum()),
        Op::Mean(a) => {
            let a = value(*a);
            if a.is_empty() {
                return Err(MathError::InvalidNode("mean of empty tensor"));
            }
            Tensor::scalar(a.data().iter().sum::<f64>() / a.len() as f64)
        }
        Op::Square(a) => value(*a).map(|x| x * x),
        Op::Sqrt(a) => {
            let a = value(*a);
            if a.data().iter().any(|&x| x < 0.0) {
                return Err(MathError::NonFinite { op: "sqrt" });
            }
            a.map(f64::sqrt)
        }
        Op::Density(a) => {
            let a = value(*a);
            if a.data().iter().any(|&y| y <= physics::DENSITY_POLE_C) {
                return Err(MathError::Domain {
                    op: "density",
                    detail: "temperature at or below the pole of the density equation",
                });
            }
            a.map(physics::density_unchecked)
        }
    };
    out.check_finite(op.name())?;
    Ok(out)
}

/// Operation recorder. One tape per forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    fn push_leaf(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push_leaf(Op::Input, value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(Op::Constant, value, false)
    }

    /// Binds a parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let idx = id.index();
        if idx >= self.param_vars.len() {
            self.param_vars.resize(idx + 1, None);
        }
        if let Some(v) = self.param_vars[idx] {
            return v;
        }
        let v = self.push_leaf(Op::Param(id), store.value(id).clone(), true);
        self.param_vars[idx] = Some(v);
        v
    }

    fn push(&mut self, op: Op) -> Result<Var, MathError> {
        let nodes = &self.nodes;
        let value = eval(&op, |v| &nodes[v.0].value)?;
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        self.push(Op::MatMul(a, b))
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        self.push(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        self.push(Op::Sub(a, b))
    }
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        self.push(Op::Hadamard(a, b))
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, MathError> {
        self.push(Op::Scale(a, c))
    }
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var, MathError> {
        self.push(Op::Affine(a, scale, shift))
    }
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, MathError> {
        self.push(Op::Concat(parts.to_vec()))
    }
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, MathError> {
        self.push(Op::SliceCols(a, start, len))
    }
    pub fn sigmoid(&mut self, a: Var) -> Result<Var, MathError> {
        self.push(Op::Sigmoid(a))
    }
    pub fn tanh(&mut self, a: Var) -> Result<Var, MathError> {
        self.push(Op::Tanh(a))
    }
    pub fn relu(&mut self, a: Var) -> Result<Var, MathError> {
        self.push(Op::Relu(a))
    }
    pub fn elu(&mut self, a: Var) -> Result<Var, MathError> {
        self.push(Op::Elu(a))
    }
    pub fn sum(&mut self, a: Var) -> Result<Var, MathError> {
        self.push(Op::Sum(a))
    }
    pub fn mean(&mut self, a: Var) -> Result<Var, MathError> {
        self.push(Op::Mean(a))
    }
    pub fn square(&mut self, a: Var) -> Result<Var, MathError> {
        self.push(Op::Square(a))
    }
    pub fn sqrt(&mut self, a: Var) -> Result<Var, MathError> {
        self.push(Op::Sqrt(a))
    }
    pub fn density(&mut self, a: Var) -> Result<Var, MathError> {
        self.push(Op::Density(a))
    }

    /// `x W + b`, with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, MathError> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    /// Recomputes every non-leaf value from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Tensor>, MathError> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = if node.op.is_leaf() {
                node.value.clone()
            } else {
                eval(&node.op, |v| &values[v.0])?
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Names of the primitives recorded on this tape, in order.
    pub fn op_names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.nodes.iter().map(|n| n.op.name())
    }

    /// Adjoints of `loss` with respect to every node that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients, MathError> {
        if self.nodes.is_empty() {
            return Err(MathError::EmptyTape);
        }
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(MathError::NotScalar {
                shape: root.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.op.is_leaf() {
                grads[i] = Some(g);
                continue;
            }
            let y = &node.value;
            let mut acc = |v: Var, contrib: Vec<f64>| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => {
                        for (e, c) in existing.iter_mut().zip(&contrib) {
                            *e += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            };
            let val = |v: Var| &self.nodes[v.0].value;
            let needs = |v: Var| self.nodes[v.0].requires_grad;
            match &node.op {
                Op::Input | Op::Constant | Op::Param(_) => unreachable!(),
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    if needs(*a) {
                        acc(*a, matmul_nt(&g, bv.data(), m, k, n));
                    }
                    if needs(*b) {
                        acc(*b, matmul_tn(av.data(), &g, m, k, n));
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) {
                        -1.0
                    } else {
                        1.0
                    };
                    let (av, bv) = (val(*a), val(*b));
                    let kind = broadcast_kind("add", av, bv)?;
                    if needs(*b) {
                        let mut gb = reduce_broadcast(kind, &g, bv.len(), av.cols());
                        if sign < 0.0 {
                            gb.iter_mut().for_each(|x| *x = -*x);
                        }
                        acc(*b, gb);
                    }
                    if needs(*a) {
                        acc(*a, g);
                    }
                }
                Op::Hadamard(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    if needs(*a) {
                        acc(*a, g.iter().zip(bv.data()).map(|(x, y)| x * y).collect());
                    }
                    if needs(*b) {
                        acc(*b, g.iter().zip(av.data()).map(|(x, y)| x * y).collect());
                    }
                }
                Op::Scale(a, c) => acc(*a, g.iter().map(|x| x * c).collect()),
                Op::Affine(a, s, _) => acc(*a, g.iter().map(|x| x * s).collect()),
                Op::Concat(parts) => {
                    let rows = y.rows();
                    let total = y.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let pc = val(p).cols();
                        if needs(p) {
                            let mut gp = Vec::with_capacity(rows * pc);
                            for r in 0..rows {
                                gp.extend_from_slice(
                                    &g[r * total + offset..r * total + offset + pc],
                                );
                            }
                            acc(p, gp);
                        }
                        offset += pc;
                    }
                }
                Op::SliceCols(a, start, len) => {
                    let av = val(*a);
                    let cols = av.cols();
                    let mut ga = vec![0.0; av.len()];
                    for r in 0..av.rows() {
                        ga[r * cols + start..r * cols + start + len]
                            .copy_from_slice(&g[r * len..(r + 1) * len]);
                    }
                    acc(*a, ga);
                }
                Op::Sigmoid(a) => acc(
                    *a,
                    g.iter()
                        .zip(y.data())
                        .map(|(g, s)| g * s * (1.0 - s))
                        .collect(),
                ),
                Op::Tanh(a) => acc(
                    *a,
                    g.iter()
                        .zip(y.data())
                        .map(|(g, t)| g * (1.0 - t * t))
                        .collect(),
                ),
                Op::Relu(a) => acc(
                    *a,
                    g.iter()
                        .zip(val(*a).data())
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect(),
                ),
                Op::Elu(a) => acc(
                    *a,
                    g.iter()
                        .zip(val(*a).data())
                        .zip(y.data())
                        .map(|((g, &x), &out)| if x > 0.0 { *g } else { g * (out + 1.0) })
                        .collect(),
                ),
                Op::Sum(a) => acc(*a, vec![g[0]; val(*a).len()]),
                Op::Mean(a) => {
                    let n = val(*a).len();
                    acc(*a, vec![g[0] / n as f64; n]);
                }
                Op::Square(a) => acc(
                    *a,
                    g.iter()
                        .zip(val(*a).data())
                        .map(|(g, x)| 2.0 * x * g)
                        .collect(),
                ),
                // Subgradient 0 at the origin.
                Op::Sqrt(a) => acc(
                    *a,
                    g.iter()
                        .zip(y.data())
                        .map(|(g, &r)| if r > 0.0 { g / (2.0 * r) } else { 0.0 })
                        .collect(),
                ),
                Op::Density(a) => acc(
                    *a,
                    g.iter()
                        .zip(val(*a).data())
                        .map(|(g, &t)| g * physics::density_derivative(t))
                        .collect(),
                ),
            }
        }
        if grads.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(MathError::NonFinite { op: "backward" });
        }
        Ok(Gradients { grads })
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` did not influence the loss.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        let shape = tape.value(v).shape().to_vec();
        match self.grads.get(v.0).and_then(Option::as_ref) {
            Some(g) => Tensor::from_parts(shape, g.clone()),
            None => Tensor::zeros(&shape),
        }
    }

    /// One gradient per parameter of `store`, zero for parameters not bound
    /// on the tape or not reached from the loss.
    pub fn for_params(&self, tape: &Tape, store: &ParamStore) -> Vec<Tensor> {
        store
            .ids()
            .map(
                |id| match tape.param_vars.get(id.index()).copied().flatten() {
                    Some(v) => self.wrt(tape, v),
                    None => Tensor::zeros(store.value(id).shape()),
                },
            )
            .collect()
    }
}
