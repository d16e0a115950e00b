//! The implicit scene representation: multi-level feature voxel grids with
//! small MLP decoders for SDF and color, plus the learned opacity sharpness.
//!
//! Both heads follow the same recipe: trilinearly interpolate every level of
//! the head's feature pyramid at the normalized query point, concatenate the
//! per-level features with a Fourier positional encoding, and decode through
//! one softplus hidden layer. The SDF spatial gradient is computed as three
//! directional derivative passes expressed in ordinary tape operations, so
//! losses built on the gradient backpropagate exactly into every parameter
//! without a general second-order engine.

mod encoding;
mod interp;

pub use encoding::{encoding_width, positional_encoding, positional_encoding_tangent};
pub use interp::{interp_level, vertex_row, GridPoint};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamGroup, Parameter, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{norm, sub, SceneBounds, Vec3};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FieldConfig {
    pub bounds: SceneBounds,
    /// Per-level grid resolutions, strictly increasing, each >= 2.
    pub resolutions: Vec<usize>,
    /// Feature channels per level.
    pub channels: usize,
    /// Positional encoding frequency count.
    pub pe_frequencies: usize,
    /// Decoder hidden width.
    pub hidden: usize,
    /// Initial opacity-profile standard deviation; the learned inverse
    /// standard deviation starts at 1/std_init and is stored as a logarithm
    /// so it stays positive.
    pub std_init: f64,
    /// Std of the random feature initialization.
    pub grid_noise_std: f64,
    /// Initial surface: a sphere of radius `factor * (bounds half-diagonal)`
    /// about the bounds center, sampled into channel 0 of the finest SDF
    /// level and passed through the decoder by an exact softplus pair.
    pub sphere_radius_factor: f64,
    pub init_seed: u64,
}

impl FieldConfig {
    pub fn with_bounds(bounds: SceneBounds) -> Self {
        FieldConfig {
            bounds,
            resolutions: vec![16, 32, 64, 128],
            channels: 4,
            pe_frequencies: 6,
            hidden: 128,
            std_init: 0.3,
            grid_noise_std: 0.01,
            sphere_radius_factor: 0.5,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() || self.resolutions.iter().any(|&r| r < 2) {
            return Err(Error::BadConfig(format!(
                "grid resolutions {:?} must all be >= 2",
                self.resolutions
            )));
        }
        if !self.resolutions.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::BadConfig(format!(
                "grid resolutions {:?} must be strictly increasing",
                self.resolutions
            )));
        }
        if self.channels == 0 || self.hidden == 0 || self.pe_frequencies == 0 {
            return Err(Error::BadConfig("zero-sized field component".into()));
        }
        if self.std_init <= 0.0 {
            return Err(Error::BadConfig("std_init must be positive".into()));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.resolutions.len()
    }

    /// Decoder input width: concatenated level features plus the encoding.
    pub fn input_width(&self) -> usize {
        self.levels() * self.channels + encoding_width(self.pe_frequencies)
    }

    pub fn init_sphere_radius(&self) -> f64 {
        self.sphere_radius_factor * 0.5 * self.bounds.diagonal()
    }
}

/// Index layout of the parameter vector.
fn param_layout(levels: usize) -> (usize, usize, usize) {
    // (sdf decoder base, color decoder base, inv-std index)
    (2 * levels, 2 * levels + 4, 2 * levels + 8)
}

/// All trainable state of the field, with a fixed parameter ordering used by
/// the optimizer and the checkpoint format.
pub struct FieldParams {
    pub config: FieldConfig,
    pub params: Vec<Parameter>,
}

impl FieldParams {
    /// Initialize a fresh field. The initial SDF equals the trilinear
    /// interpolation of the init sphere sampled on the finest level (exactly,
    /// via a softplus(x) - softplus(-x) = x pass-through pair) plus the
    /// random features routed through zero-initialized output weights, which
    /// contribute nothing until training moves them.
    pub fn init(config: FieldConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(config.init_seed);
        let levels = config.levels();
        let channels = config.channels;
        let mut params = Vec::new();

        let center = config.bounds.center();
        let radius = config.init_sphere_radius();
        for kind in ["sdf", "color"] {
            for (l, &res) in config.resolutions.iter().enumerate() {
                let rows = res * res * res;
                let mut data = vec![0.0f64; rows * channels];
                for v in data.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = z * config.grid_noise_std;
                }
                if kind == "sdf" && l == levels - 1 {
                    // finest level, channel 0: the init sphere SDF
                    for z in 0..res {
                        for y in 0..res {
                            for x in 0..res {
                                let g = [
                                    x as f64 / (res - 1) as f64,
                                    y as f64 / (res - 1) as f64,
                                    z as f64 / (res - 1) as f64,
                                ];
                                let p = config.bounds.denormalize(g);
                                let row = vertex_row(res, x, y, z);
                                data[row * channels] = norm(sub(p, center)) - radius;
                            }
                        }
                    }
                }
                params.push(Parameter::new(
                    format!("{kind}_grid_{l}"),
                    ParamGroup::Grid,
                    Tensor::from_vec(&[rows, channels], data),
                ));
            }
        }

        let in_dim = config.input_width();
        let hidden = config.hidden;
        let xavier = 1.0 / (in_dim as f64).sqrt();
        let mut linear = |wire_sdf: bool, out_dim: usize, name: &str| {
            let mut w1 = vec![0.0f64; in_dim * hidden];
            for v in w1.iter_mut() {
                *v = rng.gen_range(-xavier..xavier);
            }
            let mut w2 = vec![0.0f64; hidden * out_dim];
            if wire_sdf {
                // exact pass-through of the summed channel-0 features:
                // hidden 0 carries +sum, hidden 1 carries -sum, and
                // softplus(x) - softplus(-x) == x recovers the sum.
                for h in 0..2 {
                    for row in 0..in_dim {
                        w1[row * hidden + h] = 0.0;
                    }
                    for l in 0..levels {
                        let row = l * channels;
                        w1[row * hidden + h] = if h == 0 { 1.0 } else { -1.0 };
                    }
                }
                w2[0] = 1.0;
                w2[out_dim] = -1.0; // row 1, column 0
            }
            vec![
                Parameter::new(
                    format!("{name}_w1"),
                    ParamGroup::Decoder,
                    Tensor::from_vec(&[in_dim, hidden], w1),
                ),
                Parameter::new(
                    format!("{name}_b1"),
                    ParamGroup::Decoder,
                    Tensor::zeros(&[hidden]),
                ),
                Parameter::new(
                    format!("{name}_w2"),
                    ParamGroup::Decoder,
                    Tensor::from_vec(&[hidden, out_dim], w2),
                ),
                Parameter::new(
                    format!("{name}_b2"),
                    ParamGroup::Decoder,
                    Tensor::zeros(&[out_dim]),
                ),
            ]
        };
        params.extend(linear(true, 1, "sdf_dec"));
        params.extend(linear(false, 3, "color_dec"));

        params.push(Parameter::new(
            "log_inv_std",
            ParamGroup::InvStd,
            Tensor::scalar((1.0 / config.std_init).ln()),
        ));

        Ok(FieldParams { config, params })
    }

    pub fn param(&self, name: &str) -> &Parameter {
        self.params
            .iter()
            .find(|p| p.name == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn param_mut(&mut self, name: &str) -> &mut Parameter {
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    /// Register every parameter on a tape. The returned handle evaluates the
    /// field and exposes the leaf vars in parameter order for gradient
    /// scatter after backward.
    pub fn watch<'t, 'p>(&'p self, tape: &'t Tape) -> FieldVars<'t, 'p> {
        let vars: Vec<Var<'t>> = self
            .params
            .iter()
            .map(|p| tape.variable(p.value.clone()))
            .collect();
        FieldVars {
            tape,
            config: &self.config,
            vars,
        }
    }

    /// Map world points to clamped grid coordinates.
    pub fn grid_points(&self, pts_world: &[Vec3]) -> Vec<GridPoint> {
        grid_points(&self.config.bounds, pts_world)
    }
}

pub fn grid_points(bounds: &SceneBounds, pts_world: &[Vec3]) -> Vec<GridPoint> {
    pts_world
        .iter()
        .map(|&p| {
            let (g, _) = bounds.normalize_to_grid(p);
            let mut clamped = [false; 3];
            let mut q = [0.0f64; 3];
            for a in 0..3 {
                clamped[a] = g[a] < 0.0 || g[a] > 1.0;
                q[a] = g[a].clamp(0.0, 1.0);
            }
            GridPoint { p: q, clamped }
        })
        .collect()
}

/// Tape-bound view of the field for one forward/backward cycle.
pub struct FieldVars<'t, 'p> {
    tape: &'t Tape,
    pub config: &'p FieldConfig,
    /// Leaf vars aligned with `FieldParams::params`.
    pub vars: Vec<Var<'t>>,
}

struct DecoderVars<'t> {
    w1: Var<'t>,
    b1: Var<'t>,
    w2: Var<'t>,
    b2: Var<'t>,
}

impl<'t, 'p> FieldVars<'t, 'p> {
    fn sdf_grid(&self, l: usize) -> Var<'t> {
        self.vars[l]
    }

    fn color_grid(&self, l: usize) -> Var<'t> {
        self.vars[self.config.levels() + l]
    }

    fn decoder(&self, base: usize) -> DecoderVars<'t> {
        DecoderVars {
            w1: self.vars[base],
            b1: self.vars[base + 1],
            w2: self.vars[base + 2],
            b2: self.vars[base + 3],
        }
    }

    pub fn log_inv_std(&self) -> Var<'t> {
        let (_, _, idx) = param_layout(self.config.levels());
        self.vars[idx]
    }

    /// The positive opacity sharpness (inverse standard deviation).
    pub fn inv_std(&self) -> Var<'t> {
        self.log_inv_std().exp()
    }

    fn world_scale(&self) -> [f64; 3] {
        let e = self.config.bounds.extent();
        [1.0 / e[0], 1.0 / e[1], 1.0 / e[2]]
    }

    /// SDF values at world points, shape (N,).
    pub fn sdf(&self, pts_world: &[Vec3]) -> Var<'t> {
        let gp = grid_points(&self.config.bounds, pts_world);
        self.sdf_at_grid_points(&gp, false).0
    }

    /// SDF values and their world-space spatial gradient, shapes (N,) and
    /// (N, 3). The gradient is built from tape operations, so it can be
    /// differentiated once more with respect to every parameter.
    pub fn sdf_with_gradient(&self, pts_world: &[Vec3]) -> (Var<'t>, Var<'t>) {
        let gp = grid_points(&self.config.bounds, pts_world);
        let (s, n) = self.sdf_at_grid_points(&gp, true);
        (s, n.expect("tangents requested"))
    }

    fn sdf_at_grid_points(
        &self,
        gp: &[GridPoint],
        with_gradient: bool,
    ) -> (Var<'t>, Option<Var<'t>>) {
        let n = gp.len();
        let ws = self.world_scale();
        let (dec_base, _, _) = param_layout(self.config.levels());
        let dec = self.decoder(dec_base);

        let mut feats = Vec::with_capacity(self.config.levels() + 1);
        let mut tangs: [Vec<Var<'t>>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (l, &res) in self.config.resolutions.iter().enumerate() {
            let (f, t) = interp_level(
                self.sdf_grid(l),
                res,
                gp,
                if with_gradient { Some(ws) } else { None },
            );
            feats.push(f);
            if let Some(t) = t {
                for a in 0..3 {
                    tangs[a].push(t[a]);
                }
            }
        }
        feats.push(
            self.tape
                .constant(positional_encoding(gp, self.config.pe_frequencies)),
        );
        let u = self.tape.concat(&feats);
        let pre = u.matmul(dec.w1).add(dec.b1);
        let h = pre.softplus();
        let s = h.matmul(dec.w2).add(dec.b2).reshape(&[n]);

        if !with_gradient {
            return (s, None);
        }
        let gate = pre.sigmoid();
        let mut grad_cols = Vec::with_capacity(3);
        for (a, tang) in tangs.iter().enumerate() {
            let mut parts = tang.clone();
            parts.push(self.tape.constant(positional_encoding_tangent(
                gp,
                self.config.pe_frequencies,
                a,
                ws[a],
            )));
            let udot = self.tape.concat(&parts);
            let hdot = gate.mul(udot.matmul(dec.w1));
            grad_cols.push(hdot.matmul(dec.w2));
        }
        let grad = self.tape.concat(&grad_cols);
        (s, Some(grad))
    }

    /// Color in (0,1)^3 at world points, shape (N, 3).
    pub fn color(&self, pts_world: &[Vec3]) -> Var<'t> {
        let gp = grid_points(&self.config.bounds, pts_world);
        let (_, col_base, _) = param_layout(self.config.levels());
        let dec = self.decoder(col_base);
        let mut feats = Vec::with_capacity(self.config.levels() + 1);
        for (l, &res) in self.config.resolutions.iter().enumerate() {
            let (f, _) = interp_level(self.color_grid(l), res, &gp, None);
            feats.push(f);
        }
        feats.push(
            self.tape
                .constant(positional_encoding(&gp, self.config.pe_frequencies)),
        );
        let u = self.tape.concat(&feats);
        let h = u.matmul(dec.w1).add(dec.b1).softplus();
        h.matmul(dec.w2).add(dec.b2).sigmoid()
    }
}

#[cfg(test)]
mod tests;
