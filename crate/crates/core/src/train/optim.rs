use serde::{Deserialize, Serialize};

use crate::param::ParamStore;
use crate::tensor::{Scalar, Tensor};

/// Polynomial decay: `base * (1 - epoch / epochs)^power`.
pub fn poly_lr(base: f64, epoch: usize, epochs: usize, power: f64) -> f64 {
    base * (1.0 - epoch as f64 / epochs as f64).max(0.0).powf(power)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
    /// Global gradient-norm limit applied before weight decay.
    pub grad_clip: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { momentum: 0.99, weight_decay: 3e-5, nesterov: true, grad_clip: Some(12.0) }
    }
}

/// Momentum SGD with L2 weight decay. Velocity buffers follow the store's
/// parameter order.
#[derive(Clone, Debug)]
pub struct Sgd<S> {
    pub config: SgdConfig,
    velocity: Vec<Tensor<S>>,
}

impl<S: Scalar> Sgd<S> {
    pub fn new(config: SgdConfig, store: &ParamStore<S>) -> Self {
        let velocity = store.iter().map(|(_, p)| Tensor::zeros(p.value().shape().to_vec())).collect();
        Sgd { config, velocity }
    }

    /// Global L2 norm of the accumulated gradients.
    pub fn grad_norm(store: &ParamStore<S>) -> f64 {
        store
            .iter()
            .flat_map(|(_, p)| p.grad().data().iter().map(|g| g.as_f64() * g.as_f64()))
            .sum::<f64>()
            .sqrt()
    }

    /// Updates values from the store's gradients; returns the pre-clip norm.
    pub fn step(&mut self, store: &mut ParamStore<S>, lr: f64) -> f64 {
        let norm = Self::grad_norm(store);
        let clip = match self.config.grad_clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let (mu, wd) = (self.config.momentum, self.config.weight_decay);
        for ((value, grad), vel) in store.values_and_grads_mut().zip(&mut self.velocity) {
            for ((w, g), v) in value.data_mut().iter_mut().zip(grad.data()).zip(vel.data_mut()) {
                let d = g.as_f64() * clip + wd * w.as_f64();
                let vn = mu * v.as_f64() + d;
                *v = S::from_f64_lossy(vn);
                let update = if self.config.nesterov { d + mu * vn } else { vn };
                *w = S::from_f64_lossy(w.as_f64() - lr * update);
            }
        }
        norm
    }
}
