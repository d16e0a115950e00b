//! Reverse-mode automatic differentiation over dense f64 arrays.
//!
//! A [`Tape`] records operations define-by-run; [`Tape::backward`] accumulates
//! exact gradients for every watched leaf. Tapes are rebuilt per training step
//! and confined to one thread. All arithmetic is 64-bit so finite-difference
//! verification stays trustworthy.

mod backward;
mod gradcheck;
mod param;
mod tape;
mod tensor;

pub use backward::Gradients;
pub use gradcheck::grad_check;
pub use param::{ParamGroup, Parameter};
pub use tape::{Kind, Tape, Var};
pub use tensor::{broadcast_shape, Tensor};
