use std::sync::Arc;

use crate::error::{Error, Result};

/// Dense row-major array of f64 values. Cheap to clone (shared storage) and
/// immutable once built, so tape nodes can hold forward values without copying.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<[f64]>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::BadShape {
                op: "tensor",
                shape,
                reason: format!("shape wants {} elements, data has {}", numel, data.len()),
            });
        }
        Ok(Tensor {
            shape,
            data: data.into(),
        })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value].into(),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel].into(),
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel].into(),
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        Tensor::new(shape.to_vec(), data).expect("tensor shape/data length mismatch")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.to_vec()
    }

    /// Row-major strides for this shape.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::BadShape {
                op: "reshape",
                shape,
                reason: format!("cannot view {} elements", self.numel()),
            });
        }
        Ok(Tensor {
            shape,
            data: Arc::clone(&self.data),
        })
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.numel() <= 8 {
            write!(f, "Tensor{:?} {:?}", self.shape, &self.data[..])
        } else {
            write!(
                f,
                "Tensor{:?} [{}, {}, ... ({} values)]",
                self.shape,
                self.data[0],
                self.data[1],
                self.numel()
            )
        }
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Shape of the result of broadcasting `lhs` with `rhs`, aligning axes at the
/// trailing end (missing leading axes count as 1, size-1 axes expand).
pub fn broadcast_shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<Vec<usize>> {
    let rank = lhs.len().max(rhs.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let a = dim_from_end(lhs, rank - 1 - i);
        let b = dim_from_end(rhs, rank - 1 - i);
        out[i] = if a == b {
            a
        } else if a == 1 {
            b
        } else if b == 1 {
            a
        } else {
            return Err(Error::ShapeMismatch {
                op,
                lhs: lhs.to_vec(),
                rhs: rhs.to_vec(),
            });
        };
    }
    Ok(out)
}

fn dim_from_end(shape: &[usize], from_end: usize) -> usize {
    if from_end < shape.len() {
        shape[shape.len() - 1 - from_end]
    } else {
        1
    }
}

/// Strides for reading a tensor of shape `shape` as if broadcast to `out_shape`
/// (zero stride on expanded axes).
pub(crate) fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let native = strides_of(shape);
    let rank = out_shape.len();
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let from_end = rank - 1 - i;
        if from_end < shape.len() {
            let idx = shape.len() - 1 - from_end;
            out[i] = if shape[idx] == 1 { 0 } else { native[idx] };
        }
    }
    out
}

/// Applies `f` elementwise over two tensors broadcast to `out_shape`,
/// writing results in row-major order.
pub(crate) fn zip_broadcast(
    a: &Tensor,
    b: &Tensor,
    out_shape: &[usize],
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let numel: usize = out_shape.iter().product();
    let mut out = Vec::with_capacity(numel);
    if a.shape() == out_shape && b.shape() == out_shape {
        // fast path: no broadcasting
        let ad = a.data();
        let bd = b.data();
        out.extend((0..numel).map(|i| f(ad[i], bd[i])));
        return out;
    }
    if b.numel() == 1 {
        let bv = b.data()[0];
        if a.shape() == out_shape {
            out.extend(a.data().iter().map(|&av| f(av, bv)));
            return out;
        }
    }
    if a.numel() == 1 {
        let av = a.data()[0];
        if b.shape() == out_shape {
            out.extend(b.data().iter().map(|&bv| f(av, bv)));
            return out;
        }
    }
    let sa = broadcast_strides(a.shape(), out_shape);
    let sb = broadcast_strides(b.shape(), out_shape);
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let (mut off_a, mut off_b) = (0usize, 0usize);
    let ad = a.data();
    let bd = b.data();
    for _ in 0..numel {
        out.push(f(ad[off_a], bd[off_b]));
        // increment multi-index from the last axis
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off_a += sa[ax];
            off_b += sb[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
            off_a -= sa[ax] * out_shape[ax];
            off_b -= sb[ax] * out_shape[ax];
        }
    }
    out
}

/// Sum-reduces `grad` (shaped `grad_shape`) onto a tensor of shape `target`,
/// following the broadcast rules in reverse. Accumulates into `out`.
pub(crate) fn reduce_into(grad: &[f64], grad_shape: &[usize], target: &[usize], out: &mut [f64]) {
    if grad_shape == target {
        for (o, g) in out.iter_mut().zip(grad.iter()) {
            *o += g;
        }
        return;
    }
    let strides = broadcast_strides(target, grad_shape);
    let rank = grad_shape.len();
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for &g in grad.iter() {
        out[off] += g;
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += strides[ax];
            if idx[ax] < grad_shape[ax] {
                break;
            }
            idx[ax] = 0;
            off -= strides[ax] * grad_shape[ax];
        }
    }
}
