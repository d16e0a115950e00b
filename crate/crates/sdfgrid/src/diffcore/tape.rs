use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::tensor::{broadcast_shape, zip_broadcast, Tensor};

/// Operation kinds recordable on the tape.
///
/// Elementwise binary kinds broadcast with trailing-axis alignment (missing
/// leading axes count as 1, size-1 axes expand).
#[derive(Clone, Debug)]
pub enum Kind {
    /// Input value; `watched` leaves receive gradients, constants are skipped.
    Leaf { watched: bool },
    Add,
    Sub,
    Mul,
    /// 2-D matrix product (M,K)x(K,N).
    Matmul,
    /// Sum of all elements to a scalar.
    Sum,
    /// Mean of all elements to a scalar.
    Mean,
    /// Sum along one axis (axis removed from the shape).
    SumAxis(usize),
    Exp,
    Sigmoid,
    Softplus,
    Abs,
    Square,
    Sqrt,
    Recip,
    Sin,
    Cos,
    /// Euclidean norm along the last axis (axis removed).
    NormLastAxis,
    /// Elementwise max(x, c); subgradient 0 at the kink.
    MaxScalar(f64),
    /// Multiply by a scalar constant.
    Scale(f64),
    /// Add a scalar constant.
    AddScalar(f64),
    /// Concatenate inputs along the last axis.
    Concat,
    /// Select rows (leading axis) by index; duplicate indices allowed.
    GatherRows(Arc<[usize]>),
    /// Contiguous slice along the last axis.
    SliceLastAxis { start: usize, len: usize },
    /// View with a different shape (same element count, row-major order).
    Reshape,
    /// Alpha compositing weights along the last axis:
    /// `w_i = alpha_i * prod_{j<i} (1 - alpha_j)`.
    TransmittanceWeights,
}

pub(crate) struct Node {
    pub kind: Kind,
    pub inputs: Vec<usize>,
    pub value: Tensor,
    pub needs_grad: bool,
}

/// Define-by-run differentiation tape. Nodes are append-only and write-once;
/// a tape lives for one forward/backward cycle and is confined to one thread.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: RefCell<Vec<Node>>,
}

/// Handle to a tape node. Copyable; all arithmetic goes through the tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) index: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}", self.index)
    }
}


impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn record(&self, kind: Kind, inputs: Vec<usize>, value: Tensor) -> Var<'_> {
        let needs_grad = {
            let nodes = self.nodes.borrow();
            match kind {
                Kind::Leaf { watched } => watched,
                _ => inputs.iter().any(|&i| nodes[i].needs_grad),
            }
        };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            kind,
            inputs,
            value,
            needs_grad,
        });
        Var {
            tape: self,
            index: nodes.len() - 1,
        }
    }

    /// Record an input that should receive gradients.
    pub fn variable(&self, value: Tensor) -> Var<'_> {
        self.record(Kind::Leaf { watched: true }, vec![], value)
    }

    /// Record an input treated as a constant (no gradient).
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.record(Kind::Leaf { watched: false }, vec![], value)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    pub(crate) fn value_of(&self, index: usize) -> Tensor {
        self.nodes.borrow()[index].value.clone()
    }

    /// Apply one operation to the given inputs, checking shapes, computing the
    /// forward value, and recording the node. The single fallible entry point;
    /// the `Var` methods wrap it and panic on shape errors.
    pub fn op_forward<'t>(&'t self, kind: Kind, inputs: &[Var<'t>]) -> Result<Var<'t>> {
        for v in inputs {
            debug_assert!(std::ptr::eq(v.tape, self), "vars from a different tape");
        }
        let vals: Vec<Tensor> = inputs.iter().map(|v| self.value_of(v.index)).collect();
        let ids: Vec<usize> = inputs.iter().map(|v| v.index).collect();
        let value = forward(&kind, &vals)?;
        Ok(self.record(kind, ids, value))
    }

    /// Concatenate along the last axis.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>]) -> Var<'t> {
        self.op_forward(Kind::Concat, parts)
            .unwrap_or_else(|e| panic!("{e}"))
    }
}

fn elementwise(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_vec(t.shape(), t.data().iter().map(|&x| f(x)).collect())
}

pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn stable_softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn forward(kind: &Kind, vals: &[Tensor]) -> Result<Tensor> {
    match kind {
        Kind::Leaf { .. } => unreachable!("leaves are recorded directly"),
        Kind::Add => binary("add", vals, |a, b| a + b),
        Kind::Sub => binary("subtract", vals, |a, b| a - b),
        Kind::Mul => binary("multiply", vals, |a, b| a * b),
        Kind::Matmul => matmul(&vals[0], &vals[1]),
        Kind::Sum => Ok(Tensor::scalar(vals[0].data().iter().sum())),
        Kind::Mean => {
            let t = &vals[0];
            Ok(Tensor::scalar(
                t.data().iter().sum::<f64>() / t.numel() as f64,
            ))
        }
        Kind::SumAxis(axis) => sum_axis(&vals[0], *axis),
        Kind::Exp => Ok(elementwise(&vals[0], f64::exp)),
        Kind::Sigmoid => Ok(elementwise(&vals[0], stable_sigmoid)),
        Kind::Softplus => Ok(elementwise(&vals[0], stable_softplus)),
        Kind::Abs => Ok(elementwise(&vals[0], f64::abs)),
        Kind::Square => Ok(elementwise(&vals[0], |x| x * x)),
        Kind::Sqrt => Ok(elementwise(&vals[0], f64::sqrt)),
        Kind::Recip => Ok(elementwise(&vals[0], f64::recip)),
        Kind::Sin => Ok(elementwise(&vals[0], f64::sin)),
        Kind::Cos => Ok(elementwise(&vals[0], f64::cos)),
        Kind::NormLastAxis => norm_last_axis(&vals[0]),
        Kind::MaxScalar(c) => Ok(elementwise(&vals[0], |x| x.max(*c))),
        Kind::Scale(c) => Ok(elementwise(&vals[0], |x| x * c)),
        Kind::AddScalar(c) => Ok(elementwise(&vals[0], |x| x + c)),
        Kind::Concat => concat_last(vals),
        Kind::GatherRows(idx) => gather_rows(&vals[0], idx),
        Kind::SliceLastAxis { start, len } => slice_last(&vals[0], *start, *len),
        Kind::Reshape => unreachable!("reshape is recorded directly"),
        Kind::TransmittanceWeights => transmittance_weights(&vals[0]),
    }
}

fn binary(op: &'static str, vals: &[Tensor], f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let (a, b) = (&vals[0], &vals[1]);
    let shape = broadcast_shape(op, a.shape(), b.shape())?;
    let data = zip_broadcast(a, b, &shape, f);
    Tensor::new(shape, data)
}

fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = vec![0.0f64; m * n];
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data().as_ptr(),
            k as isize,
            1,
            b.data().as_ptr(),
            n as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Tensor::new(vec![m, n], out)
}

fn sum_axis(t: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= t.rank() {
        return Err(Error::BadShape {
            op: "sum-axis",
            shape: t.shape().to_vec(),
            reason: format!("axis {} out of range", axis),
        });
    }
    let shape = t.shape();
    let out_shape: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != axis)
        .map(|(_, &d)| d)
        .collect();
    let outer: usize = shape[..axis].iter().product();
    let mid = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0f64; outer * inner];
    let data = t.data();
    for o in 0..outer {
        for m in 0..mid {
            let base = (o * mid + m) * inner;
            let obase = o * inner;
            for i in 0..inner {
                out[obase + i] += data[base + i];
            }
        }
    }
    Tensor::new(out_shape, out)
}

fn norm_last_axis(t: &Tensor) -> Result<Tensor> {
    if t.rank() == 0 {
        return Err(Error::BadShape {
            op: "l2-norm-along-last-axis",
            shape: vec![],
            reason: "needs at least rank 1".into(),
        });
    }
    let last = *t.shape().last().unwrap();
    let rows = t.numel() / last.max(1);
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &t.data()[r * last..(r + 1) * last];
        out.push(row.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    Tensor::new(t.shape()[..t.rank() - 1].to_vec(), out)
}

fn concat_last(vals: &[Tensor]) -> Result<Tensor> {
    if vals.is_empty() {
        return Err(Error::BadShape {
            op: "concatenate-along-last-axis",
            shape: vec![],
            reason: "no inputs".into(),
        });
    }
    let first = &vals[0];
    if first.rank() == 0 {
        return Err(Error::BadShape {
            op: "concatenate-along-last-axis",
            shape: vec![],
            reason: "needs at least rank 1".into(),
        });
    }
    let lead = &first.shape()[..first.rank() - 1];
    let mut total_last = 0usize;
    for v in vals {
        if v.rank() != first.rank() || &v.shape()[..v.rank() - 1] != lead {
            return Err(Error::ShapeMismatch {
                op: "concatenate-along-last-axis",
                lhs: first.shape().to_vec(),
                rhs: v.shape().to_vec(),
            });
        }
        total_last += v.shape()[v.rank() - 1];
    }
    let rows: usize = lead.iter().product();
    let mut out = Vec::with_capacity(rows * total_last);
    for r in 0..rows {
        for v in vals {
            let last = v.shape()[v.rank() - 1];
            out.extend_from_slice(&v.data()[r * last..(r + 1) * last]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total_last);
    Tensor::new(shape, out)
}

fn gather_rows(t: &Tensor, idx: &[usize]) -> Result<Tensor> {
    if t.rank() == 0 {
        return Err(Error::BadShape {
            op: "gather-rows",
            shape: vec![],
            reason: "needs at least rank 1".into(),
        });
    }
    let rows = t.shape()[0];
    let row_size = t.numel() / rows.max(1);
    if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
        return Err(Error::BadShape {
            op: "gather-rows",
            shape: t.shape().to_vec(),
            reason: format!("row index {} out of range 0..{}", bad, rows),
        });
    }
    let mut out = Vec::with_capacity(idx.len() * row_size);
    for &i in idx {
        out.extend_from_slice(&t.data()[i * row_size..(i + 1) * row_size]);
    }
    let mut shape = t.shape().to_vec();
    shape[0] = idx.len();
    Tensor::new(shape, out)
}

fn slice_last(t: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    if t.rank() == 0 {
        return Err(Error::BadShape {
            op: "slice-last-axis",
            shape: vec![],
            reason: "needs at least rank 1".into(),
        });
    }
    let last = *t.shape().last().unwrap();
    if start + len > last {
        return Err(Error::BadShape {
            op: "slice-last-axis",
            shape: t.shape().to_vec(),
            reason: format!("slice {}..{} exceeds last axis {}", start, start + len, last),
        });
    }
    let rows = t.numel() / last.max(1);
    let mut out = Vec::with_capacity(rows * len);
    for r in 0..rows {
        out.extend_from_slice(&t.data()[r * last + start..r * last + start + len]);
    }
    let mut shape = t.shape().to_vec();
    *shape.last_mut().unwrap() = len;
    Tensor::new(shape, out)
}

fn transmittance_weights(alpha: &Tensor) -> Result<Tensor> {
    if alpha.rank() == 0 {
        return Err(Error::BadShape {
            op: "transmittance-weights",
            shape: vec![],
            reason: "needs at least rank 1".into(),
        });
    }
    let last = *alpha.shape().last().unwrap();
    let rows = alpha.numel() / last.max(1);
    let data = alpha.data();
    let mut out = vec![0.0f64; alpha.numel()];
    for r in 0..rows {
        let mut trans = 1.0f64;
        for j in 0..last {
            let a = data[r * last + j];
            out[r * last + j] = trans * a;
            trans *= 1.0 - a;
        }
    }
    Tensor::new(alpha.shape().to_vec(), out)
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.index)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.index].value.shape().to_vec()
    }

    /// Scalar value of a one-element node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn unary(self, kind: Kind) -> Var<'t> {
        self.tape
            .op_forward(kind, &[self])
            .unwrap_or_else(|e| panic!("{e}"))
    }

    fn binary_op(self, kind: Kind, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .op_forward(kind, &[self, rhs])
            .unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary_op(Kind::Add, rhs)
    }

    pub fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary_op(Kind::Sub, rhs)
    }

    pub fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary_op(Kind::Mul, rhs)
    }

    pub fn matmul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary_op(Kind::Matmul, rhs)
    }

    pub fn sum(self) -> Var<'t> {
        self.unary(Kind::Sum)
    }

    pub fn mean(self) -> Var<'t> {
        self.unary(Kind::Mean)
    }

    pub fn sum_axis(self, axis: usize) -> Var<'t> {
        self.unary(Kind::SumAxis(axis))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Kind::Exp)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Kind::Sigmoid)
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary(Kind::Softplus)
    }

    pub fn abs(self) -> Var<'t> {
        self.unary(Kind::Abs)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(Kind::Square)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(Kind::Sqrt)
    }

    pub fn recip(self) -> Var<'t> {
        self.unary(Kind::Recip)
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(Kind::Sin)
    }

    pub fn cos(self) -> Var<'t> {
        self.unary(Kind::Cos)
    }

    pub fn norm_last_axis(self) -> Var<'t> {
        self.unary(Kind::NormLastAxis)
    }

    pub fn max_scalar(self, c: f64) -> Var<'t> {
        self.unary(Kind::MaxScalar(c))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Kind::Scale(c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(Kind::AddScalar(c))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn gather_rows(self, idx: Arc<[usize]>) -> Var<'t> {
        self.unary(Kind::GatherRows(idx))
    }

    pub fn slice_last(self, start: usize, len: usize) -> Var<'t> {
        self.unary(Kind::SliceLastAxis { start, len })
    }

    pub fn transmittance_weights(self) -> Var<'t> {
        self.unary(Kind::TransmittanceWeights)
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t> {
        let value = self
            .value()
            .reshaped(shape.to_vec())
            .unwrap_or_else(|e| panic!("{e}"));
        self.tape.record(Kind::Reshape, vec![self.index], value)
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        Var::add(self, rhs)
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        Var::sub(self, rhs)
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        Var::mul(self, rhs)
    }
}
