//! Reverse-mode differentiation tape.
//!
//! Every operation appends a node holding its forward value. Nodes are only
//! differentiated when at least one input requires a gradient; otherwise they
//! are stored as constants. All reductions run in ascending index order so a
//! replayed tape reproduces values and gradients bit for bit.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Primitive operation selector for [`Tape::forward_op`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpTag {
    Add,
    Sub,
    Mul,
    /// Multiply by a fixed scalar.
    Scale(f64),
    MatMul,
    Transpose,
    Relu,
    Tanh,
    Square,
    /// Sum of all elements, shape `[1]`.
    Sum,
    /// Sum over the trailing axis of a matrix, shape `[rows, 1]`.
    SumRows,
    Mean,
    Exp,
    Log,
    Neg,
}

impl OpTag {
    fn name(self) -> &'static str {
        match self {
            OpTag::Add => "add",
            OpTag::Sub => "sub",
            OpTag::Mul => "mul",
            OpTag::Scale(_) => "scale",
            OpTag::MatMul => "matmul",
            OpTag::Transpose => "transpose",
            OpTag::Relu => "relu",
            OpTag::Tanh => "tanh",
            OpTag::Square => "square",
            OpTag::Sum => "sum",
            OpTag::SumRows => "sum_rows",
            OpTag::Mean => "mean",
            OpTag::Exp => "exp",
            OpTag::Log => "log",
            OpTag::Neg => "neg",
        }
    }

    fn arity(self) -> usize {
        match self {
            OpTag::Add | OpTag::Sub | OpTag::Mul | OpTag::MatMul => 2,
            _ => 1,
        }
    }
}

/// How the right operand of an elementwise binary op maps onto the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    Scalar,
    /// `[cols]` or `[1, cols]` repeated down every row.
    Row { cols: usize },
    /// `[rows, 1]` repeated across every column.
    Col { cols: usize },
}

impl Broadcast {
    fn resolve(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<Self> {
        if lhs == rhs {
            return Ok(Broadcast::Same);
        }
        let rhs_numel: usize = rhs.iter().product();
        if rhs_numel == 1 {
            return Ok(Broadcast::Scalar);
        }
        if lhs.len() == 2 {
            let (r, c) = (lhs[0], lhs[1]);
            if rhs == [c] || rhs == [1, c] {
                return Ok(Broadcast::Row { cols: c });
            }
            if rhs == [r, 1] {
                return Ok(Broadcast::Col { cols: c });
            }
        }
        Err(Error::dim(op, lhs, rhs))
    }

    #[inline]
    fn rhs_index(self, i: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Scalar => 0,
            Broadcast::Row { cols } => i % cols,
            Broadcast::Col { cols } => i / cols,
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize, Broadcast),
    Sub(usize, usize, Broadcast),
    Mul(usize, usize, Broadcast),
    Scale(usize, f64),
    MatMul(usize, usize),
    Transpose(usize),
    Relu(usize),
    Tanh(usize),
    Square(usize),
    Sum(usize),
    SumRows(usize),
    Mean(usize),
    Exp(usize),
    Log(usize),
    Neg(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of operations; inputs always precede their consumers.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros of `like`'s shape when nothing reached it.
    pub fn get_or_zeros(&self, var: Var, like: &Tensor) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros_like(like))
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn check(&self, var: Var) -> Result<()> {
        if var.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Index {
                index: var.0,
                len: self.nodes.len(),
            })
        }
    }

    /// Applies a primitive to `inputs`, recording it when any input is tracked.
    pub fn forward_op(&mut self, tag: OpTag, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != tag.arity() {
            return Err(Error::Contract(format!(
                "{} takes {} input(s), got {}",
                tag.name(),
                tag.arity(),
                inputs.len()
            )));
        }
        for &v in inputs {
            self.check(v)?;
        }
        let requires_grad = inputs.iter().any(|&v| self.requires_grad(v));
        let (value, op) = match tag {
            OpTag::Add | OpTag::Sub | OpTag::Mul => {
                let (a, b) = (inputs[0].0, inputs[1].0);
                let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
                let bc = Broadcast::resolve(tag.name(), va.shape(), vb.shape())?;
                let rhs = vb.data();
                let f: fn(f64, f64) -> f64 = match tag {
                    OpTag::Add => |x, y| x + y,
                    OpTag::Sub => |x, y| x - y,
                    _ => |x, y| x * y,
                };
                let data = va
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, rhs[bc.rhs_index(i)]))
                    .collect();
                let value = Tensor::new(va.shape().to_vec(), data)?;
                let op = match tag {
                    OpTag::Add => Op::Add(a, b, bc),
                    OpTag::Sub => Op::Sub(a, b, bc),
                    _ => Op::Mul(a, b, bc),
                };
                (value, op)
            }
            OpTag::MatMul => {
                let (a, b) = (inputs[0].0, inputs[1].0);
                let value = matmul(&self.nodes[a].value, &self.nodes[b].value)?;
                (value, Op::MatMul(a, b))
            }
            OpTag::Transpose => {
                let a = inputs[0].0;
                (transpose(&self.nodes[a].value)?, Op::Transpose(a))
            }
            OpTag::Scale(s) => {
                let a = inputs[0].0;
                (self.map(a, |x| x * s)?, Op::Scale(a, s))
            }
            OpTag::Relu => {
                let a = inputs[0].0;
                (self.map(a, |x| if x > 0.0 { x } else { 0.0 })?, Op::Relu(a))
            }
            OpTag::Tanh => {
                let a = inputs[0].0;
                (self.map(a, f64::tanh)?, Op::Tanh(a))
            }
            OpTag::Square => {
                let a = inputs[0].0;
                (self.map(a, |x| x * x)?, Op::Square(a))
            }
            OpTag::Exp => {
                let a = inputs[0].0;
                (self.map(a, f64::exp)?, Op::Exp(a))
            }
            OpTag::Log => {
                let a = inputs[0].0;
                (self.map(a, f64::ln)?, Op::Log(a))
            }
            OpTag::Neg => {
                let a = inputs[0].0;
                (self.map(a, |x| -x)?, Op::Neg(a))
            }
            OpTag::Sum => {
                let a = inputs[0].0;
                let s = ordered_sum(self.nodes[a].value.data());
                (Tensor::scalar(s), Op::Sum(a))
            }
            OpTag::Mean => {
                let a = inputs[0].0;
                let v = &self.nodes[a].value;
                let s = ordered_sum(v.data()) / v.len() as f64;
                (Tensor::scalar(s), Op::Mean(a))
            }
            OpTag::SumRows => {
                let a = inputs[0].0;
                let v = &self.nodes[a].value;
                if v.shape().len() != 2 {
                    return Err(Error::dim("sum_rows", v.shape(), &[]));
                }
                let data: Vec<f64> = v.row_iter().map(ordered_sum).collect();
                (Tensor::matrix(v.rows(), 1, data)?, Op::SumRows(a))
            }
        };
        Ok(self.push(value, op, requires_grad))
    }

    fn map(&self, a: usize, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let v = &self.nodes[a].value;
        Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| f(x)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward_op(OpTag::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward_op(OpTag::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward_op(OpTag::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.forward_op(OpTag::Scale(factor), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward_op(OpTag::MatMul, &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.forward_op(OpTag::Transpose, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.forward_op(OpTag::Relu, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.forward_op(OpTag::Tanh, &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.forward_op(OpTag::Square, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.forward_op(OpTag::Sum, &[a])
    }

    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        self.forward_op(OpTag::SumRows, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.forward_op(OpTag::Mean, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.forward_op(OpTag::Exp, &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.forward_op(OpTag::Log, &[a])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.forward_op(OpTag::Neg, &[a])
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Returns gradients for every tracked node reachable from `loss`,
    /// including `loss` itself (which is 1).
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(loss_value.shape().to_vec(), 1.0)?);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(
        &self,
        op: &Op,
        out: &Tensor,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let val = |i: usize| &self.nodes[i].value;
        match *op {
            Op::Leaf => {}
            Op::Add(a, b, bc) | Op::Sub(a, b, bc) => {
                let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.nodes[a].requires_grad {
                    accumulate(grads, a, g.shape(), g.data().iter().copied())?;
                }
                if self.nodes[b].requires_grad {
                    let reduced = reduce_broadcast(g.data().iter().copied(), bc, val(b));
                    accumulate(
                        grads,
                        b,
                        val(b).shape(),
                        reduced.into_iter().map(|x| sign * x),
                    )?;
                }
            }
            Op::Mul(a, b, bc) => {
                let (va, vb) = (val(a), val(b));
                if self.nodes[a].requires_grad {
                    let it = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, &gi)| gi * vb.data()[bc.rhs_index(i)]);
                    accumulate(grads, a, va.shape(), it)?;
                }
                if self.nodes[b].requires_grad {
                    let prod = g.data().iter().zip(va.data()).map(|(&gi, &ai)| gi * ai);
                    let reduced = reduce_broadcast(prod, bc, vb);
                    accumulate(grads, b, vb.shape(), reduced.into_iter())?;
                }
            }
            Op::Scale(a, s) => {
                accumulate(grads, a, g.shape(), g.data().iter().map(|&x| x * s))?;
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (val(a), val(b));
                if self.nodes[a].requires_grad {
                    let ga = matmul(g, &transpose(vb)?)?;
                    accumulate(grads, a, va.shape(), ga.into_data().into_iter())?;
                }
                if self.nodes[b].requires_grad {
                    let gb = matmul(&transpose(va)?, g)?;
                    accumulate(grads, b, vb.shape(), gb.into_data().into_iter())?;
                }
            }
            Op::Transpose(a) => {
                let ga = transpose(g)?;
                accumulate(grads, a, val(a).shape(), ga.into_data().into_iter())?;
            }
            Op::Relu(a) => {
                let it = g
                    .data()
                    .iter()
                    .zip(val(a).data())
                    .map(|(&gi, &x)| if x > 0.0 { gi } else { 0.0 });
                accumulate(grads, a, g.shape(), it)?;
            }
            Op::Tanh(a) => {
                let it = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(&gi, &y)| gi * (1.0 - y * y));
                accumulate(grads, a, g.shape(), it)?;
            }
            Op::Square(a) => {
                let it = g
                    .data()
                    .iter()
                    .zip(val(a).data())
                    .map(|(&gi, &x)| gi * 2.0 * x);
                accumulate(grads, a, g.shape(), it)?;
            }
            Op::Exp(a) => {
                let it = g.data().iter().zip(out.data()).map(|(&gi, &y)| gi * y);
                accumulate(grads, a, g.shape(), it)?;
            }
            Op::Log(a) => {
                let it = g.data().iter().zip(val(a).data()).map(|(&gi, &x)| gi / x);
                accumulate(grads, a, g.shape(), it)?;
            }
            Op::Neg(a) => {
                accumulate(grads, a, g.shape(), g.data().iter().map(|&x| -x))?;
            }
            Op::Sum(a) => {
                let va = val(a);
                let gs = g.data()[0];
                accumulate(grads, a, va.shape(), std::iter::repeat_n(gs, va.len()))?;
            }
            Op::Mean(a) => {
                let va = val(a);
                let gs = g.data()[0] / va.len() as f64;
                accumulate(grads, a, va.shape(), std::iter::repeat_n(gs, va.len()))?;
            }
            Op::SumRows(a) => {
                let va = val(a);
                let cols = va.cols();
                let it = (0..va.len()).map(|i| g.data()[i / cols]);
                accumulate(grads, a, va.shape(), it)?;
            }
        }
        Ok(())
    }
}

fn accumulate(
    grads: &mut [Option<Tensor>],
    id: usize,
    shape: &[usize],
    contrib: impl Iterator<Item = f64>,
) -> Result<()> {
    match &mut grads[id] {
        Some(existing) => {
            for (e, c) in existing.data_mut().iter_mut().zip(contrib) {
                *e += c;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), contrib.collect())?);
        }
    }
    Ok(())
}

/// Sums an upstream gradient back onto the (possibly broadcast) right operand.
fn reduce_broadcast(g: impl Iterator<Item = f64>, bc: Broadcast, rhs: &Tensor) -> Vec<f64> {
    if bc == Broadcast::Same {
        return g.collect();
    }
    let mut out = vec![0.0; rhs.len()];
    for (i, gi) in g.enumerate() {
        out[bc.rhs_index(i)] += gi;
    }
    out
}

/// Left-to-right summation.
pub(crate) fn ordered_sum(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |acc, &x| acc + x)
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bpj) in orow.iter_mut().zip(brow) {
                *o += aip * bpj;
            }
        }
    }
    Tensor::matrix(m, n, out)
}

pub(crate) fn transpose(a: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 {
        return Err(Error::dim("transpose", a.shape(), &[]));
    }
    let (r, c) = (a.shape()[0], a.shape()[1]);
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a.data()[i * c + j];
        }
    }
    Tensor::matrix(c, r, out)
}
