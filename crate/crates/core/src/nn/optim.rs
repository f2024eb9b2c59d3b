use super::Parameters;
use crate::error::{Error, Result};

/// Stochastic gradient descent with classical momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Parameters,
}

impl Sgd {
    pub fn new(params: &Parameters, lr: f64, momentum: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {lr} must be non-negative")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!("momentum {momentum} outside [0, 1)")));
        }
        let mut velocity = params.clone();
        velocity.scale(0.0);
        Ok(Self { lr, momentum, velocity })
    }

    /// `v = momentum * v - lr * g; p += v`.
    pub fn step(&mut self, params: &mut Parameters, grads: &Parameters) {
        sgd_step(params, grads, &mut self.velocity, self.lr, self.momentum);
    }
}

pub fn sgd_step(params: &mut Parameters, grads: &Parameters, velocity: &mut Parameters, lr: f64, momentum: f64) {
    for ((p, v), g) in params.values_mut().zip(velocity.values_mut()).zip(grads.values()) {
        *v = momentum * *v - lr * g;
        *p += *v;
    }
}
