use alloc::format;
use alloc::string::String;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::nn::params::{ParamId, ParamKind, ParamStore};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Registers freshly initialised parameters under a dotted name prefix.
pub struct Init<'a, T: Real> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a, T: Real> Init<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            store,
            rng,
            prefix: String::new(),
        }
    }

    /// Initialiser whose names are nested under `name`.
    pub fn scope(&mut self, name: &str) -> Init<'_, T> {
        let prefix = self.path(name);
        Init {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    pub fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            String::from(name)
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    /// He/Kaiming normal initialisation, `std = sqrt(2 / fan_in)`.
    pub fn kaiming(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let std = libm::sqrt(2.0 / fan_in as f64);
        let dist = Normal::new(0.0, std).expect("finite std");
        let rng = &mut *self.rng;
        let value = Tensor::from_fn(shape, |_| T::from_f64(dist.sample(rng)));
        self.store.register(&self.path(name), value, ParamKind::Trainable)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], v: f64, kind: ParamKind) -> Result<ParamId> {
        self.store
            .register(&self.path(name), Tensor::full(shape, T::from_f64(v)), kind)
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
