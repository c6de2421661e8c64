use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

/// RMSProp with per-parameter running averages of squared gradients.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    mean_square: Vec<Tensor>,
}

impl RmsProp {
    pub const DEFAULT_DECAY: f64 = 0.9;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    pub fn new(store: &ParamStore, learning_rate: f64) -> Self {
        Self::with_hyper(store, learning_rate, Self::DEFAULT_DECAY, Self::DEFAULT_EPSILON)
    }

    pub fn with_hyper(store: &ParamStore, learning_rate: f64, decay: f64, epsilon: f64) -> Self {
        RmsProp {
            learning_rate,
            decay,
            epsilon,
            mean_square: store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn mean_square(&self) -> &[Tensor] {
        &self.mean_square
    }

    /// `v ← ρv + (1−ρ)g²`, `p ← p − η g / (√v + ε)`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::shape("rmsprop_step", &[store.len()], &[grads.len()]));
        }
        let ids: Vec<_> = store.ids().collect();
        for ((id, g), v) in ids.into_iter().zip(grads).zip(&mut self.mean_square) {
            let p = store.get_mut(id);
            if p.shape() != g.shape() {
                return Err(Error::shape("rmsprop_step", p.shape(), g.shape()));
            }
            for ((pi, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vi = self.decay * *vi + (1.0 - self.decay) * gi * gi;
                *pi -= self.learning_rate * gi / (vi.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
