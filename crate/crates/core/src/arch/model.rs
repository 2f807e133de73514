use alloc::vec::Vec;

use crate::arch::config::NetConfig;
use crate::arch::networks::Network;
use crate::error::Result;
use crate::graph::Var;
use crate::nn::init::{seeded_rng, Init};
use crate::nn::params::ParamStore;
use crate::nn::session::{Mode, Session};
use crate::predict::WordPrediction;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// A network together with its parameters.
#[derive(Debug, Clone)]
pub struct Model<T: Real> {
    pub config: NetConfig,
    pub net: Network,
    pub params: ParamStore<T>,
}

/// Result of one training forward/backward pass.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    /// Sum over heads of the batch-mean cross-entropy.
    pub loss: f64,
    pub predictions: Vec<WordPrediction>,
}

/// Sum over heads of the mean cross-entropy.
pub fn summed_cross_entropy<T: Real>(s: &mut Session<'_, T>, heads: &[Var], labels: &[usize]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &h in heads {
        let ce = s.graph.cross_entropy(h, labels)?;
        total = Some(match total {
            Some(t) => s.graph.add(t, ce)?,
            None => ce,
        });
    }
    Ok(total.expect("at least one head"))
}

fn predictions<T: Real>(s: &Session<'_, T>, heads: &[Var]) -> Vec<WordPrediction> {
    let n = s.value(heads[0]).shape()[0];
    (0..n)
        .map(|i| {
            let logits: Vec<Vec<f64>> = heads
                .iter()
                .map(|&h| {
                    let t = s.value(h);
                    let k = t.shape()[1];
                    t.data()[i * k..(i + 1) * k].iter().map(|v| v.to_f64()).collect()
                })
                .collect();
            WordPrediction::from_head_logits(&logits)
        })
        .collect()
}

impl<T: Real> Model<T> {
    /// Builds the network with Kaiming-normal weights drawn from `seed`.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let mut rng = seeded_rng(seed);
        let net = Network::new(&mut Init::new(&mut params, &mut rng), &config)?;
        Ok(Self { config, net, params })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.trainable_count()
    }

    /// Head logits for a batch `[N, 1, H, W]`.
    pub fn forward(&mut self, images: &Tensor<T>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        let mut s = Session::new(&mut self.params, mode);
        let x = s.input(images.clone());
        let heads = self.net.forward(&mut s, &self.config, x)?;
        Ok(heads.iter().map(|&h| s.value(h).clone()).collect())
    }

    /// Evaluation-mode word predictions for a batch.
    pub fn predict(&mut self, images: &Tensor<T>) -> Result<Vec<WordPrediction>> {
        let mut s = Session::new(&mut self.params, Mode::Eval);
        let x = s.input(images.clone());
        let heads = self.net.forward(&mut s, &self.config, x)?;
        Ok(predictions(&s, &heads))
    }

    /// Training-mode forward pass and backward pass of the summed
    /// cross-entropy. Gradients are added to `self.params`.
    pub fn train_batch(&mut self, images: &Tensor<T>, labels: &[usize]) -> Result<BatchOutcome> {
        let mut s = Session::new(&mut self.params, Mode::Train);
        let x = s.input(images.clone());
        let heads = self.net.forward(&mut s, &self.config, x)?;
        let loss = summed_cross_entropy(&mut s, &heads, labels)?;
        let value = s.value(loss).data()[0].to_f64();
        if value.is_finite() {
            s.backward(loss)?;
        }
        Ok(BatchOutcome {
            loss: value,
            predictions: predictions(&s, &heads),
        })
    }

    /// Loss on a batch without touching gradients or running statistics.
    pub fn eval_loss(&mut self, images: &Tensor<T>, labels: &[usize], mode: Mode) -> Result<f64> {
        let mut scratch = self.params.clone();
        let mut s = Session::new(&mut scratch, mode);
        let x = s.input(images.clone());
        let heads = self.net.forward(&mut s, &self.config, x)?;
        let loss = summed_cross_entropy(&mut s, &heads, labels)?;
        Ok(s.value(loss).data()[0].to_f64())
    }

    pub fn zero_fusion_weights(&mut self) {
        self.net.zero_fusion_weights(&mut self.params);
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            net: self.net.clone(),
            params: self.params.cast(),
        }
    }
}
