use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::*;
use crate::diffcore::Tape;

fn mini_config(noise: f64) -> FieldConfig {
    FieldConfig {
        bounds: SceneBounds::new([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]).unwrap(),
        resolutions: vec![2, 3],
        channels: 2,
        pe_frequencies: 2,
        hidden: 6,
        std_init: 0.3,
        grid_noise_std: noise,
        sphere_radius_factor: 0.5,
        init_seed: 42,
    }
}

/// Trilinear interpolation of one channel done by hand, as an oracle.
fn trilerp_channel(values: &Tensor, res: usize, channels: usize, ch: usize, g: [f64; 3]) -> f64 {
    let s = (res - 1) as f64;
    let q = [g[0] * s, g[1] * s, g[2] * s];
    let i0: Vec<usize> = q.iter().map(|&v| (v.floor() as usize).min(res - 2)).collect();
    let f: Vec<f64> = (0..3).map(|a| q[a] - i0[a] as f64).collect();
    let mut out = 0.0;
    for cz in 0..2usize {
        for cy in 0..2usize {
            for cx in 0..2usize {
                let w = (if cx == 1 { f[0] } else { 1.0 - f[0] })
                    * (if cy == 1 { f[1] } else { 1.0 - f[1] })
                    * (if cz == 1 { f[2] } else { 1.0 - f[2] });
                let row = vertex_row(res, i0[0] + cx, i0[1] + cy, i0[2] + cz);
                out += w * values.data()[row * channels + ch];
            }
        }
    }
    out
}

#[test]
fn noise_free_init_matches_sphere_interpolation_exactly() {
    let field = FieldParams::init(mini_config(0.0)).unwrap();
    let cfg = &field.config;
    let fine = cfg.resolutions.len() - 1;
    let fine_res = *cfg.resolutions.last().unwrap();
    let grid = field.param(&format!("sdf_grid_{fine}")).value.clone();

    let tape = Tape::new();
    let fv = field.watch(&tape);
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    for _ in 0..50 {
        let p = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let s = fv.sdf(&[p]).item();
        let (g, _) = cfg.bounds.normalize_to_grid(p);
        let expected = trilerp_channel(&grid, fine_res, cfg.channels, 0, g);
        assert!(
            (s - expected).abs() < 1e-12,
            "sdf {s} vs interpolated sphere {expected}"
        );
    }
}

#[test]
fn init_value_at_center_is_minus_radius() {
    let field = FieldParams::init(mini_config(0.01)).unwrap();
    let r = field.config.init_sphere_radius();
    let tape = Tape::new();
    let fv = field.watch(&tape);
    let s = fv.sdf(&[field.config.bounds.center()]).item();
    assert!(s < 0.0, "center must be inside the init sphere, got {s}");
    assert!((s + r).abs() < 0.25 * r, "expected about {} got {s}", -r);
}

#[test]
fn evaluation_is_pure() {
    let field = FieldParams::init(mini_config(0.05)).unwrap();
    let tape = Tape::new();
    let fv = field.watch(&tape);
    let p = [[0.3, -0.2, 0.7], [0.0, 0.0, 0.0]];
    let a = fv.sdf(&p).value();
    let b = fv.sdf(&p).value();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    let ca = fv.color(&p).value();
    let cb = fv.color(&p).value();
    for (x, y) in ca.data().iter().zip(cb.data()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn hand_set_linear_field_has_unit_x_gradient() {
    // write s(p) = p_x into the finest channel-0 grid; trilinear
    // interpolation is exact on linear functions
    let mut field = FieldParams::init(mini_config(0.0)).unwrap();
    let cfg = field.config.clone();
    let fine = cfg.resolutions.len() - 1;
    let res = *cfg.resolutions.last().unwrap();
    let name = format!("sdf_grid_{fine}");
    let mut data = field.param(&name).value.to_vec();
    for z in 0..res {
        for y in 0..res {
            for x in 0..res {
                let g = [
                    x as f64 / (res - 1) as f64,
                    y as f64 / (res - 1) as f64,
                    z as f64 / (res - 1) as f64,
                ];
                let p = cfg.bounds.denormalize(g);
                data[vertex_row(res, x, y, z) * cfg.channels] = p[0];
            }
        }
    }
    field.param_mut(&name).value = Tensor::from_vec(&[res * res * res, cfg.channels], data);

    let tape = Tape::new();
    let fv = field.watch(&tape);
    let pts = [[0.21, -0.4, 0.65], [-0.8, 0.9, -0.33]];
    let (s, n) = fv.sdf_with_gradient(&pts);
    let sv = s.value();
    let nv = n.value();
    for (i, p) in pts.iter().enumerate() {
        assert!((sv.data()[i] - p[0]).abs() < 1e-12);
        assert!((nv.data()[i * 3] - 1.0).abs() < 1e-9);
        assert!(nv.data()[i * 3 + 1].abs() < 1e-9);
        assert!(nv.data()[i * 3 + 2].abs() < 1e-9);
    }
}

#[test]
fn spatial_gradient_matches_finite_differences() {
    let field = FieldParams::init(FieldConfig {
        grid_noise_std: 0.05,
        ..mini_config(0.0)
    })
    .unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let h = 1e-5;
    for _ in 0..20 {
        // mid-cell points of the finest grid, away from faces
        let res = *field.config.resolutions.last().unwrap();
        let cell = (res - 1) as f64;
        let g: [f64; 3] = std::array::from_fn(|_| {
            (rng.gen_range(0..res - 1) as f64 + rng.gen_range(0.2..0.8)) / cell
        });
        let p = field.config.bounds.denormalize(g);

        let tape = Tape::new();
        let fv = field.watch(&tape);
        let (_, n) = fv.sdf_with_gradient(&[p]);
        let analytic = n.value().to_vec();

        for a in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp[a] += h;
            pm[a] -= h;
            let t2 = Tape::new();
            let f2 = field.watch(&t2);
            let fd = (f2.sdf(&[pp]).item() - f2.sdf(&[pm]).item()) / (2.0 * h);
            let err = (analytic[a] - fd).abs() / fd.abs().max(1.0);
            assert!(err < 1e-4, "axis {a}: {} vs {fd}", analytic[a]);
        }
    }
}

#[test]
fn sphere_init_gradient_is_radial() {
    // the default finest resolution keeps the discretized sphere smooth
    // enough for a 2 degree test at radius 0.3 (gradient error is about
    // cell_size / (2 * radius) radians)
    let cfg = FieldConfig {
        resolutions: vec![8, 128],
        channels: 1,
        pe_frequencies: 2,
        hidden: 8,
        grid_noise_std: 0.0,
        ..mini_config(0.0)
    };
    let field = FieldParams::init(cfg).unwrap();
    let tape = Tape::new();
    let fv = field.watch(&tape);
    let center = field.config.bounds.center();
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    for _ in 0..20 {
        let dir = crate::geometry::normalize([
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ]);
        let p = crate::geometry::add(center, crate::geometry::scale(dir, 0.3));
        let (_, n) = fv.sdf_with_gradient(&[p]);
        let g = crate::geometry::normalize([
            n.value().data()[0],
            n.value().data()[1],
            n.value().data()[2],
        ]);
        let cosang = crate::geometry::dot(g, dir).clamp(-1.0, 1.0);
        let angle = cosang.acos().to_degrees();
        assert!(angle < 2.0, "gradient {angle} deg off radial");
    }
}

#[test]
fn color_is_gray_at_init_and_bounded() {
    let mut field = FieldParams::init(mini_config(0.05)).unwrap();
    let tape = Tape::new();
    let fv = field.watch(&tape);
    let pts = [[0.1, 0.2, 0.3], [-0.5, 0.4, -0.9]];
    // zero output weights at init: sigmoid(0) = 0.5 exactly
    for &c in fv.color(&pts).value().data() {
        assert_eq!(c, 0.5);
    }
    // perturb the output layer; color stays strictly inside (0, 1)
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let w2 = field.param("color_dec_w2").value.clone();
    field.param_mut("color_dec_w2").value = Tensor::from_vec(
        w2.shape(),
        w2.data().iter().map(|_| rng.gen_range(-3.0..3.0)).collect(),
    );
    let tape = Tape::new();
    let fv = field.watch(&tape);
    for &c in fv.color(&pts).value().data() {
        assert!(c > 0.0 && c < 1.0);
    }
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let mut field = FieldParams::init(mini_config(0.05)).unwrap();
    let pts = [[0.3, -0.1, 0.55], [-0.62, 0.28, -0.4], [0.05, 0.9, 0.13]];

    // root couples the value path and the gradient path
    let objective = |field: &FieldParams| -> f64 {
        let tape = Tape::new();
        let fv = field.watch(&tape);
        let (s, n) = fv.sdf_with_gradient(&pts);
        let c = fv.color(&pts);
        s.sum().add(n.square().sum()).add(c.square().sum()).item()
    };

    // analytic gradients
    let analytic: Vec<Vec<f64>> = {
        let tape = Tape::new();
        let fv = field.watch(&tape);
        let (s, n) = fv.sdf_with_gradient(&pts);
        let c = fv.color(&pts);
        let root = s.sum().add(n.square().sum()).add(c.square().sum());
        let grads = tape.backward(root).unwrap();
        fv.vars
            .iter()
            .map(|v| {
                grads
                    .wrt(*v)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; v.value().numel()])
            })
            .collect()
    };

    let h = 1e-5;
    let mut worst = 0.0f64;
    for pi in 0..field.params.len() {
        let base = field.params[pi].value.to_vec();
        let shape = field.params[pi].value.shape().to_vec();
        for j in 0..base.len() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[j] += h;
            minus[j] -= h;
            field.params[pi].value = Tensor::from_vec(&shape, plus);
            let fp = objective(&field);
            field.params[pi].value = Tensor::from_vec(&shape, minus);
            let fm = objective(&field);
            field.params[pi].value = Tensor::from_vec(&shape, base.clone());
            let fd = (fp - fm) / (2.0 * h);
            let err = (analytic[pi][j] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
            assert!(
                err < 1e-4,
                "param {} [{j}]: analytic {} vs fd {fd}",
                field.params[pi].name,
                analytic[pi][j]
            );
        }
    }
    eprintln!("worst parameter-gradient error: {worst:e}");
}
