//! SGD with classical momentum. The velocity buffer lives in each
//! `ParamTensor`, so one optimizer value can serve any number of nets.

use super::Mlp;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    lr: f64,
    momentum: f64,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!(
                "learning rate must be positive and finite, got {lr}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidConfig(alloc::format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(Sgd { lr, momentum })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    /// Applies one update to every parameter of `net` and zeroes the grads.
    /// Refuses to step on non-finite gradients, reporting the layer index
    /// and the largest finite |grad| found there.
    pub fn step(&self, net: &mut Mlp) -> Result<()> {
        for (li, layer) in net.layers_mut().iter_mut().enumerate() {
            for tensor in [&mut layer.weights, &mut layer.bias] {
                if !tensor.grads_finite() {
                    return Err(Error::NonFiniteGradient {
                        layer: li,
                        max_abs_grad: tensor.max_abs_finite_grad(),
                    });
                }
                tensor.sgd_update(self.lr, self.momentum);
            }
        }
        Ok(())
    }
}
