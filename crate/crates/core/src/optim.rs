//! Adam with L2 weight decay folded into the gradient, and the step learning
//! rate schedule.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::{ParamKind, ParamStore};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lr_decay_factor: f64,
    /// Epochs between learning-rate decays.
    pub lr_decay_every: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 50,
            lr: 1e-4,
            weight_decay: 1e-4,
            lr_decay_factor: 0.5,
            lr_decay_every: 10,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{what} (config: {self:?})")));
        if self.batch_size == 0 || self.epochs == 0 || self.lr_decay_every == 0 {
            return bad("batch_size, epochs and lr_decay_every must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.lr_decay_factor.is_nan() || self.lr_decay_factor <= 0.0 || self.lr_decay_factor >= 1.0 {
            return bad("lr_decay_factor must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.eps.is_nan()
            || self.eps <= 0.0
        {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }

    /// Learning rate of 1-based `epoch`: decayed once at the start of every
    /// `lr_decay_every`-th epoch boundary (epochs 11, 21, ... by default).
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let decays = epoch.saturating_sub(1) / self.lr_decay_every;
        let mut lr = self.lr;
        for _ in 0..decays {
            lr *= self.lr_decay_factor;
        }
        lr
    }
}

/// Adam state for every trainable entry of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam<T: Real> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Steps taken so far.
    pub t: u64,
    m: Vec<Option<Tensor<T>>>,
    v: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamStore<T>, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let zeros = || -> Vec<Option<Tensor<T>>> {
            params
                .entries()
                .iter()
                .map(|e| (e.kind == ParamKind::Trainable).then(|| Tensor::zeros(e.value.shape())))
                .collect()
        };
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn from_config(params: &ParamStore<T>, cfg: &TrainConfig) -> Self {
        Self::new(params, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
    }

    /// One update of every trainable parameter from its accumulated gradient.
    /// Gradients are left in place.
    pub fn step(&mut self, params: &mut ParamStore<T>, lr: f64) {
        self.t += 1;
        let t = self.t as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - self.beta1), T::from_f64(1.0 - self.beta2));
        let wd = T::from_f64(self.weight_decay);
        let step = T::from_f64(lr / c1);
        let inv_c2 = T::from_f64(1.0 / c2);
        let eps = T::from_f64(self.eps);
        for (i, e) in params.entries_mut().iter_mut().enumerate() {
            let (Some(m), Some(v)) = (self.m[i].as_mut(), self.v[i].as_mut()) else {
                continue;
            };
            let p = e.value.data_mut();
            let g = e.grad.data();
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
                let g = g + wd * *p;
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *p -= step * *m / ((*v * inv_c2).sqrt() + eps);
            }
        }
    }
}
