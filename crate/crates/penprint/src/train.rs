//! Epoch loop: shuffle, forward, summed cross-entropy, backward, Adam.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use penprint_core::{Adam, Model, TrainConfig};

use crate::checkpoint::{self, epoch_path};
use crate::dataset::{labels, stack, Sample};
use crate::error::{io_err, Error, Result};
use crate::manifest::iterate_batches;

/// One line of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean over samples of the summed per-head cross-entropy.
    pub mean_loss: f64,
    pub lr: f64,
    /// Top-1 of the training-mode predictions made during the epoch.
    pub train_top1: f64,
}

pub const LOG_HEADER: &str = "epoch,mean_loss,lr,train_top1";

impl EpochLog {
    pub fn csv(&self) -> String {
        format!(
            "{},{:.6},{:e},{:.4}",
            self.epoch, self.mean_loss, self.lr, self.train_top1
        )
    }
}

/// Trains `model` in place on `train` for `cfg.epochs` epochs.
///
/// With `out_dir`, appends to `loss.csv` and writes a checkpoint after every
/// epoch. `on_epoch` sees each log line as it is produced.
pub fn train(
    model: &mut Model<f32>,
    train: &[&Sample],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Dataset("empty training split".into()));
    }
    let mut log_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join("loss.csv");
            let mut f = File::create(&path).map_err(io_err(&path))?;
            writeln!(f, "{LOG_HEADER}").map_err(io_err(&path))?;
            Some((f, path))
        }
        None => None,
    };
    let mut adam = Adam::from_config(&model.params, cfg);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_at_epoch(epoch);
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for (batch, idx) in iterate_batches(train.len(), cfg.batch_size, cfg.seed, epoch)
            .iter()
            .enumerate()
        {
            let items: Vec<&Sample> = idx.iter().map(|&i| train[i]).collect();
            let y = labels(&items);
            model.params.zero_grad();
            let out = model.train_batch(&stack(&items), &y)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch + 1,
                    lr,
                });
            }
            adam.step(&mut model.params, lr);
            loss_sum += out.loss * items.len() as f64;
            hits += out.predictions.iter().zip(&y).filter(|(p, &l)| p.writer() == l).count();
        }
        let entry = EpochLog {
            epoch,
            mean_loss: loss_sum / train.len() as f64,
            lr,
            train_top1: hits as f64 / train.len() as f64,
        };
        if let (Some((f, path)), Some(dir)) = (log_file.as_mut(), out_dir) {
            writeln!(f, "{}", entry.csv()).map_err(io_err(path))?;
            let header = checkpoint::header_for(model, cfg, epoch);
            checkpoint::save(&epoch_path(dir, epoch), model, &header)?;
        }
        on_epoch(&entry);
        history.push(entry);
    }
    Ok(history)
}
