use crate::error::{Error, Result};

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Compare the analytic gradient of a scalar-valued tensor function against
/// central finite differences with the given step.
///
/// Returns the max over components of
/// `|analytic - central| / max(1, |central|)`. Non-finite values anywhere are
/// reported as an error carrying the offending component index.
pub fn grad_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let analytic = {
        let tape = Tape::new();
        let v = tape.variable(x.clone());
        let y = f(&tape, v);
        if y.value().numel() != 1 {
            return Err(Error::NonScalarRoot { shape: y.shape() });
        }
        let grads = tape.backward(y)?;
        match grads.wrt(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; x.numel()],
        }
    };

    let eval = |data: Vec<f64>| -> f64 {
        let tape = Tape::new();
        let v = tape.variable(Tensor::from_vec(x.shape(), data));
        f(&tape, v).item()
    };

    let base = x.to_vec();
    let mut max_err = 0.0f64;
    for i in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += step;
        minus[i] -= step;
        let central = (eval(plus) - eval(minus)) / (2.0 * step);
        let a = analytic[i];
        if !central.is_finite() || !a.is_finite() {
            return Err(Error::NonFinite {
                context: "grad_check".into(),
                index: i,
            });
        }
        let err = (a - central).abs() / central.abs().max(1.0);
        if err > max_err {
            max_err = err;
        }
    }
    Ok(max_err)
}
