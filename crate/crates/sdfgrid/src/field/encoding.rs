//! Fourier positional encoding of normalized query points.
//!
//! For each axis a and frequency k in 0..L the encoding emits
//! `sin(2^k pi p_a), cos(2^k pi p_a)`, laid out axis-major. Query points are
//! constants on the tape, so the encoding and its spatial derivative are both
//! plain tensors.

use std::f64::consts::PI;

use crate::diffcore::Tensor;

use super::interp::GridPoint;

pub fn encoding_width(freqs: usize) -> usize {
    6 * freqs
}

/// Encoding values, shape (N, 6L).
pub fn positional_encoding(pts: &[GridPoint], freqs: usize) -> Tensor {
    assert!(freqs >= 1, "need at least one frequency");
    let width = encoding_width(freqs);
    let mut data = Vec::with_capacity(pts.len() * width);
    for pt in pts {
        for a in 0..3 {
            let x = pt.p[a].clamp(0.0, 1.0);
            for k in 0..freqs {
                let arg = (1u64 << k) as f64 * PI * x;
                data.push(arg.sin());
                data.push(arg.cos());
            }
        }
    }
    Tensor::from_vec(&[pts.len(), width], data)
}

/// Derivative of the encoding along one world axis, shape (N, 6L).
/// `world_scale` is 1/extent for that axis; clamped axes get zero.
pub fn positional_encoding_tangent(
    pts: &[GridPoint],
    freqs: usize,
    axis: usize,
    world_scale: f64,
) -> Tensor {
    let width = encoding_width(freqs);
    let mut data = vec![0.0f64; pts.len() * width];
    for (i, pt) in pts.iter().enumerate() {
        if pt.clamped[axis] {
            continue;
        }
        let x = pt.p[axis].clamp(0.0, 1.0);
        let base = i * width + axis * 2 * freqs;
        for k in 0..freqs {
            let omega = (1u64 << k) as f64 * PI;
            let arg = omega * x;
            data[base + 2 * k] = omega * arg.cos() * world_scale;
            data[base + 2 * k + 1] = -omega * arg.sin() * world_scale;
        }
    }
    Tensor::from_vec(&[pts.len(), width], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(p: [f64; 3]) -> GridPoint {
        GridPoint {
            p,
            clamped: [false; 3],
        }
    }

    #[test]
    fn origin_encodes_to_zero_sines_unit_cosines() {
        let enc = positional_encoding(&[pt([0.0, 0.0, 0.0])], 4);
        for pair in enc.data().chunks(2) {
            assert_eq!(pair[0], 0.0);
            assert_eq!(pair[1], 1.0);
        }
    }

    #[test]
    fn unit_x_first_frequency() {
        // p = (1,0,0), k = 0 on axis x: sin(pi) ~ 0, cos(pi) = -1
        let enc = positional_encoding(&[pt([1.0, 0.0, 0.0])], 2);
        assert!(enc.data()[0].abs() < 1e-15);
        assert_eq!(enc.data()[1], -1.0);
    }

    #[test]
    fn tangent_matches_finite_differences() {
        let freqs = 6;
        let p = [0.371, 0.62, 0.155];
        let h = 1e-7;
        for axis in 0..3 {
            let scale = 0.5;
            let tang = positional_encoding_tangent(&[pt(p)], freqs, axis, scale);
            let mut pp = p;
            let mut pm = p;
            pp[axis] += h;
            pm[axis] -= h;
            let ep = positional_encoding(&[pt(pp)], freqs);
            let em = positional_encoding(&[pt(pm)], freqs);
            for i in 0..encoding_width(freqs) {
                let fd = (ep.data()[i] - em.data()[i]) / (2.0 * h) * scale;
                let an = tang.data()[i];
                assert!(
                    (an - fd).abs() / fd.abs().max(1.0) < 1e-6,
                    "axis {axis} component {i}: {an} vs {fd}"
                );
            }
        }
    }
}
