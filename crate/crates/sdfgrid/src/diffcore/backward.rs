use crate::error::{Error, Result};

use super::tape::{stable_sigmoid, Kind, Node, Tape, Var};
use super::tensor::{broadcast_strides, reduce_into, Tensor};

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the backward root with respect to `v`, if any reached it.
    pub fn wrt(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }
}

fn sink<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], j: usize) -> &'a mut Vec<f64> {
    let n = nodes[j].value.numel();
    grads[j].get_or_insert_with(|| vec![0.0; n])
}

impl Tape {
    /// Reverse-accumulate d(root)/d(node) for every node that influences the
    /// scalar `root`. The gradient of the root w.r.t. itself is exactly 1;
    /// nodes used more than once accumulate all contributions.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[root.index].value.numel() != 1 {
            return Err(Error::NonScalarRoot {
                shape: nodes[root.index].value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[root.index] = Some(vec![1.0]);

        for i in (0..=root.index).rev() {
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(grad) = grads[i].take() else {
                continue;
            };
            step_backward(node, &grad, &nodes, &mut grads);
            if matches!(node.kind, Kind::Leaf { .. }) {
                grads[i] = Some(grad); // keep leaf gradients for the caller
            }
        }

        let out = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|data| Tensor::from_vec(nodes[i].value.shape(), data)))
            .collect();
        Ok(Gradients { grads: out })
    }
}

fn step_backward(node: &Node, grad: &[f64], nodes: &[Node], grads: &mut [Option<Vec<f64>>]) {
    let out_shape = node.value.shape();
    match &node.kind {
        Kind::Leaf { .. } => {}
        Kind::Add => {
            for &j in &node.inputs {
                if nodes[j].needs_grad {
                    reduce_into(grad, out_shape, nodes[j].value.shape(), sink(grads, nodes, j));
                }
            }
        }
        Kind::Sub => {
            let (a, b) = (node.inputs[0], node.inputs[1]);
            if nodes[a].needs_grad {
                reduce_into(grad, out_shape, nodes[a].value.shape(), sink(grads, nodes, a));
            }
            if nodes[b].needs_grad {
                let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                reduce_into(&neg, out_shape, nodes[b].value.shape(), sink(grads, nodes, b));
            }
        }
        Kind::Mul => {
            let (a, b) = (node.inputs[0], node.inputs[1]);
            if nodes[a].needs_grad {
                let bv = nodes[b].value.clone();
                mul_backward(grad, out_shape, &bv, nodes[a].value.shape(), sink(grads, nodes, a));
            }
            if nodes[b].needs_grad {
                let av = nodes[a].value.clone();
                mul_backward(grad, out_shape, &av, nodes[b].value.shape(), sink(grads, nodes, b));
            }
        }
        Kind::Matmul => {
            let (a, b) = (node.inputs[0], node.inputs[1]);
            let (m, k) = (nodes[a].value.shape()[0], nodes[a].value.shape()[1]);
            let n = nodes[b].value.shape()[1];
            if nodes[a].needs_grad {
                let bv = nodes[b].value.clone();
                let da = sink(grads, nodes, a);
                // dA += g . B^T
                unsafe {
                    matrixmultiply::dgemm(
                        m,
                        n,
                        k,
                        1.0,
                        grad.as_ptr(),
                        n as isize,
                        1,
                        bv.data().as_ptr(),
                        1,
                        n as isize,
                        1.0,
                        da.as_mut_ptr(),
                        k as isize,
                        1,
                    );
                }
            }
            if nodes[b].needs_grad {
                let av = nodes[a].value.clone();
                let db = sink(grads, nodes, b);
                // dB += A^T . g
                unsafe {
                    matrixmultiply::dgemm(
                        k,
                        m,
                        n,
                        1.0,
                        av.data().as_ptr(),
                        1,
                        k as isize,
                        grad.as_ptr(),
                        n as isize,
                        1,
                        1.0,
                        db.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
        Kind::Sum => {
            let g = grad[0];
            for d in sink(grads, nodes, node.inputs[0]).iter_mut() {
                *d += g;
            }
        }
        Kind::Mean => {
            let j = node.inputs[0];
            let g = grad[0] / nodes[j].value.numel() as f64;
            for d in sink(grads, nodes, j).iter_mut() {
                *d += g;
            }
        }
        Kind::SumAxis(axis) => {
            let j = node.inputs[0];
            let shape = nodes[j].value.shape();
            let outer: usize = shape[..*axis].iter().product();
            let mid = shape[*axis];
            let inner: usize = shape[*axis + 1..].iter().product();
            let dj = sink(grads, nodes, j);
            for o in 0..outer {
                for m in 0..mid {
                    let base = (o * mid + m) * inner;
                    let gbase = o * inner;
                    for ii in 0..inner {
                        dj[base + ii] += grad[gbase + ii];
                    }
                }
            }
        }
        Kind::Exp => elementwise_bwd(node, nodes, grad, grads, |_, y| y),
        Kind::Sigmoid => elementwise_bwd(node, nodes, grad, grads, |_, y| y * (1.0 - y)),
        Kind::Softplus => elementwise_bwd(node, nodes, grad, grads, |x, _| stable_sigmoid(x)),
        Kind::Abs => elementwise_bwd(node, nodes, grad, grads, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }),
        Kind::Square => elementwise_bwd(node, nodes, grad, grads, |x, _| 2.0 * x),
        Kind::Sqrt => elementwise_bwd(node, nodes, grad, grads, |_, y| {
            if y > 0.0 {
                0.5 / y
            } else {
                0.0
            }
        }),
        Kind::Recip => elementwise_bwd(node, nodes, grad, grads, |_, y| -y * y),
        Kind::Sin => elementwise_bwd(node, nodes, grad, grads, |x, _| x.cos()),
        Kind::Cos => elementwise_bwd(node, nodes, grad, grads, |x, _| -x.sin()),
        Kind::NormLastAxis => {
            let j = node.inputs[0];
            let xv = nodes[j].value.clone();
            let last = *xv.shape().last().unwrap();
            let yd = node.value.clone();
            let dj = sink(grads, nodes, j);
            let xd = xv.data();
            for (r, (&y, &g)) in yd.data().iter().zip(grad.iter()).enumerate() {
                if y > 0.0 {
                    let s = g / y;
                    for c in 0..last {
                        dj[r * last + c] += s * xd[r * last + c];
                    }
                }
            }
        }
        Kind::MaxScalar(c) => {
            let c = *c;
            elementwise_bwd(node, nodes, grad, grads, move |x, _| {
                if x > c {
                    1.0
                } else {
                    0.0
                }
            })
        }
        Kind::Scale(c) => {
            let c = *c;
            let dj = sink(grads, nodes, node.inputs[0]);
            for (d, g) in dj.iter_mut().zip(grad.iter()) {
                *d += g * c;
            }
        }
        Kind::AddScalar(_) | Kind::Reshape => {
            let dj = sink(grads, nodes, node.inputs[0]);
            for (d, g) in dj.iter_mut().zip(grad.iter()) {
                *d += g;
            }
        }
        Kind::Concat => {
            let total_last = *out_shape.last().unwrap();
            let rows = node.value.numel() / total_last.max(1);
            let mut offset = 0usize;
            for &j in &node.inputs {
                let last = *nodes[j].value.shape().last().unwrap();
                if nodes[j].needs_grad {
                    let dj = sink(grads, nodes, j);
                    for r in 0..rows {
                        let gbase = r * total_last + offset;
                        let dbase = r * last;
                        for c in 0..last {
                            dj[dbase + c] += grad[gbase + c];
                        }
                    }
                }
                offset += last;
            }
        }
        Kind::GatherRows(idx) => {
            let j = node.inputs[0];
            let rows = nodes[j].value.shape()[0];
            let row_size = nodes[j].value.numel() / rows.max(1);
            let dj = sink(grads, nodes, j);
            for (out_row, &src_row) in idx.iter().enumerate() {
                let gbase = out_row * row_size;
                let dbase = src_row * row_size;
                for c in 0..row_size {
                    dj[dbase + c] += grad[gbase + c];
                }
            }
        }
        Kind::SliceLastAxis { start, len } => {
            let j = node.inputs[0];
            let last = *nodes[j].value.shape().last().unwrap();
            let rows = nodes[j].value.numel() / last.max(1);
            let dj = sink(grads, nodes, j);
            for r in 0..rows {
                for c in 0..*len {
                    dj[r * last + start + c] += grad[r * len + c];
                }
            }
        }
        Kind::TransmittanceWeights => {
            let j = node.inputs[0];
            let av = nodes[j].value.clone();
            let last = *av.shape().last().unwrap();
            let rows = av.numel() / last.max(1);
            let ad = av.data();
            let dj = sink(grads, nodes, j);
            // dL/da_j = T_j (g_j - Q_j), with the suffix recurrence
            // Q_j = g_{j+1} a_{j+1} + (1 - a_{j+1}) Q_{j+1}. Division-free, so
            // opaque samples (alpha = 1) stay exact.
            let mut trans = vec![0.0f64; last];
            for r in 0..rows {
                let base = r * last;
                let mut t = 1.0f64;
                for c in 0..last {
                    trans[c] = t;
                    t *= 1.0 - ad[base + c];
                }
                let mut q = 0.0f64;
                for c in (0..last).rev() {
                    dj[base + c] += trans[c] * (grad[base + c] - q);
                    q = grad[base + c] * ad[base + c] + (1.0 - ad[base + c]) * q;
                }
            }
        }
    }
}

fn elementwise_bwd(
    node: &Node,
    nodes: &[Node],
    grad: &[f64],
    grads: &mut [Option<Vec<f64>>],
    dfn: impl Fn(f64, f64) -> f64,
) {
    let j = node.inputs[0];
    let xv = nodes[j].value.clone();
    let yv = node.value.clone();
    let dj = sink(grads, nodes, j);
    for (((d, g), &x), &y) in dj
        .iter_mut()
        .zip(grad.iter())
        .zip(xv.data().iter())
        .zip(yv.data().iter())
    {
        *d += g * dfn(x, y);
    }
}

fn mul_backward(
    grad: &[f64],
    grad_shape: &[usize],
    other: &Tensor,
    target: &[usize],
    out: &mut [f64],
) {
    // out[target position] += grad * other, reduced over broadcast axes
    if other.shape() == grad_shape && target == grad_shape {
        for ((o, g), x) in out.iter_mut().zip(grad.iter()).zip(other.data().iter()) {
            *o += g * x;
        }
        return;
    }
    let so = broadcast_strides(other.shape(), grad_shape);
    let st = broadcast_strides(target, grad_shape);
    let rank = grad_shape.len();
    let mut idx = vec![0usize; rank];
    let (mut off_o, mut off_t) = (0usize, 0usize);
    let od = other.data();
    for &g in grad.iter() {
        out[off_t] += g * od[off_o];
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off_o += so[ax];
            off_t += st[ax];
            if idx[ax] < grad_shape[ax] {
                break;
            }
            idx[ax] = 0;
            off_o -= so[ax] * grad_shape[ax];
            off_t -= st[ax] * grad_shape[ax];
        }
    }
}
