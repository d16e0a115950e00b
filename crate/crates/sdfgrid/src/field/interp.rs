//! Differentiable trilinear interpolation over a cubic feature grid.
//!
//! A level is stored as a `(res^3, channels)` parameter; vertex (x, y, z)
//! lives at row `(z * res + y) * res + x` and covers grid coordinate
//! `(x, y, z) / (res - 1)`. Interpolation gathers the 8 enclosing vertices
//! and blends them with trilinear weights, so gradients reach the grid
//! values through the gathers and reach the query point through the
//! (per-cell constant) weight derivatives.

use std::sync::Arc;

use crate::diffcore::{Tensor, Var};

/// A query point in grid coordinates with per-axis clamp flags. Clamped axes
/// have zero spatial derivative (the field is constant outside the box).
#[derive(Clone, Copy, Debug)]
pub struct GridPoint {
    pub p: [f64; 3],
    pub clamped: [bool; 3],
}

pub fn vertex_row(res: usize, x: usize, y: usize, z: usize) -> usize {
    (z * res + y) * res + x
}

struct Stencil {
    rows: [Vec<usize>; 8],
    weights: [Vec<f64>; 8],
    // d(weight)/d(world axis) for each of the 3 axes
    dweights: [[Vec<f64>; 8]; 3],
}

fn build_stencil(res: usize, pts: &[GridPoint], world_scale: [f64; 3], tangents: bool) -> Stencil {
    let n = pts.len();
    let mut st = Stencil {
        rows: std::array::from_fn(|_| Vec::with_capacity(n)),
        weights: std::array::from_fn(|_| Vec::with_capacity(n)),
        dweights: std::array::from_fn(|_| std::array::from_fn(|_| Vec::new())),
    };
    if tangents {
        for a in 0..3 {
            for c in 0..8 {
                st.dweights[a][c].reserve(n);
            }
        }
    }
    let scale = (res - 1) as f64;
    for pt in pts {
        let mut i0 = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let q = (pt.p[a].clamp(0.0, 1.0)) * scale;
            let cell = (q.floor() as usize).min(res - 2);
            i0[a] = cell;
            frac[a] = q - cell as f64;
        }
        for c in 0..8usize {
            let bx = c & 1;
            let by = (c >> 1) & 1;
            let bz = (c >> 2) & 1;
            st.rows[c].push(vertex_row(res, i0[0] + bx, i0[1] + by, i0[2] + bz));
            let wx = if bx == 1 { frac[0] } else { 1.0 - frac[0] };
            let wy = if by == 1 { frac[1] } else { 1.0 - frac[1] };
            let wz = if bz == 1 { frac[2] } else { 1.0 - frac[2] };
            st.weights[c].push(wx * wy * wz);
            if tangents {
                let bits = [bx, by, bz];
                let w = [wx, wy, wz];
                for a in 0..3 {
                    let sign = if bits[a] == 1 { 1.0 } else { -1.0 };
                    let rest: f64 = (0..3).filter(|&b| b != a).map(|b| w[b]).product();
                    let d = if pt.clamped[a] {
                        0.0
                    } else {
                        sign * rest * scale * world_scale[a]
                    };
                    st.dweights[a][c].push(d);
                }
            }
        }
    }
    st
}

fn blend<'t>(gathers: &[Var<'t>; 8], weights: &[Vec<f64>; 8], n: usize) -> Var<'t> {
    let tape = gathers[0].tape();
    let mut acc: Option<Var> = None;
    for c in 0..8 {
        let w = tape.constant(Tensor::from_vec(&[n, 1], weights[c].clone()));
        let term = gathers[c].mul(w);
        acc = Some(match acc {
            Some(prev) => prev.add(term),
            None => term,
        });
    }
    acc.unwrap()
}

/// Interpolate one grid level at the given points.
///
/// Returns the `(N, channels)` features and, when `world_scale` is provided,
/// the three `(N, channels)` feature derivatives along the world axes
/// (`world_scale` holding 1/extent per axis).
pub fn interp_level<'t>(
    grid: Var<'t>,
    res: usize,
    pts: &[GridPoint],
    world_scale: Option<[f64; 3]>,
) -> (Var<'t>, Option<[Var<'t>; 3]>) {
    assert!(res >= 2, "grid resolution must be at least 2 per axis");
    let n = pts.len();
    let st = build_stencil(res, pts, world_scale.unwrap_or([0.0; 3]), world_scale.is_some());
    let gathers: [Var; 8] =
        std::array::from_fn(|c| grid.gather_rows(Arc::from(st.rows[c].as_slice())));
    let value = blend(&gathers, &st.weights, n);
    let tangent = world_scale.map(|_| std::array::from_fn(|a| blend(&gathers, &st.dweights[a], n)));
    (value, tangent)
}
