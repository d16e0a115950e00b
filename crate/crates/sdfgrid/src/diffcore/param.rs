use super::tensor::Tensor;

/// Learning-rate group a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Grid,
    Decoder,
    InvStd,
}

/// A trainable value with its gradient accumulator and Adam state.
/// Value, gradient, and both moments share one shape.
pub struct Parameter {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor,
    pub grad: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, group: ParamGroup, value: Tensor) -> Self {
        let n = value.numel();
        Parameter {
            name: name.into(),
            group,
            value,
            grad: vec![0.0; n],
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn accumulate(&mut self, grad: &Tensor) {
        debug_assert_eq!(grad.shape(), self.value.shape());
        for (a, g) in self.grad.iter_mut().zip(grad.data().iter()) {
            *a += g;
        }
    }
}
