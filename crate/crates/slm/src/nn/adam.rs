//! Adam with bias correction and a stepped learning-rate decay.

use serde::{Deserialize, Serialize};

use super::real::Real;
use super::tensor::{GradStore, NnError, ParamStore};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning rate is multiplied by `decay_factor^(t / decay_every)`.
    pub decay_factor: f64,
    pub decay_every: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_factor: 0.95,
            decay_every: 20_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: params.ids().map(|id| vec![T::ZERO; params.get(id).len()]).collect(),
            v: params.ids().map(|id| vec![T::ZERO; params.get(id).len()]).collect(),
            t: 0,
        }
    }

    /// Effective learning rate after the current number of steps.
    pub fn effective_lr(&self) -> f64 {
        self.config.lr * self.config.decay_factor.powi((self.t / self.config.decay_every) as i32)
    }

    /// One bias-corrected update of every parameter in place.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &GradStore<T>) -> Result<(), NnError> {
        for (idx, id) in params.ids().enumerate() {
            if grads.grads[idx].len() != params.get(id).len() {
                return Err(NnError::ShapeMismatch(format!(
                    "gradient for {} has {} values, parameter has {}",
                    params.name(id),
                    grads.grads[idx].len(),
                    params.get(id).len()
                )));
            }
        }
        self.t += 1;
        let lr = self.effective_lr();
        let b1 = T::from_f64(self.config.beta1);
        let b2 = T::from_f64(self.config.beta2);
        let one_m_b1 = T::from_f64(1.0 - self.config.beta1);
        let one_m_b2 = T::from_f64(1.0 - self.config.beta2);
        let bc1 = T::from_f64(1.0 - self.config.beta1.powi(self.t as i32));
        let bc2 = T::from_f64(1.0 - self.config.beta2.powi(self.t as i32));
        let eps = T::from_f64(self.config.eps);
        let lr_t = T::from_f64(lr);
        for (idx, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = &grads.grads[idx];
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let p = &mut params.get_mut(id).data;
            for k in 0..g.len() {
                m[k] = b1 * m[k] + one_m_b1 * g[k];
                v[k] = b2 * v[k] + one_m_b2 * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
