//! Differentiable SDF voxel-grid rendering and few-shot training.
//!
//! The crate trains a signed-distance scene representation (multi-level
//! feature voxel grids plus small MLP decoders) from a handful of posed
//! images, supervised by rendered color, monocular depth/normal priors scaled
//! against sparse SfM points, and an annealed surface regularizer that
//! smooths geometry coarse-to-fine. Rendering follows the SDF-to-opacity
//! volume compositing scheme with a learned sharpness parameter.
//!
//! Modules:
//! - [`diffcore`]: reverse-mode autodiff over dense f64 arrays.
//! - [`geometry`]: cameras, rays, projection, scene bounds, sampling.
//! - [`ingest`]: COLMAP text parsing, PFM maps, synthetic oracle scenes.
//! - [`field`]: feature pyramids, decoders, SDF/color/gradient evaluation.
//! - [`renderer`]: SDF-based alpha compositing of color/depth/normal.
//! - [`losses`]: color/normal/depth objectives and the annealed SDF loss.
//! - [`trainer`]: Adam loop, logging, checkpoints, gradient statistics.
//! - [`metrics`]: PSNR / SSIM / depth RMSE and evaluation reports.
//! - [`cli`]: the `sdfgrid` command-line entry points.

pub mod diffcore;
pub mod field;
pub mod geometry;
pub mod error;

pub use error::{Error, Result};
