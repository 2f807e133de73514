//! Flat TOML run configuration. Keys mirror the `TrainConfig` and
//! `NetConfig` field names plus a few run-level keys; every key is optional
//! and command-line flags take precedence.
//!
//! ```toml
//! arch = "sa-net"
//! manifest = "data/manifest.csv"
//! out_dir = "runs/sa"
//! quarter = true
//! epochs = 50
//! lr = 1e-4
//! seed = 3
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use penprint_core::{Level, NetConfig, TrainConfig, Variant};
use serde::Deserialize;

use crate::error::{io_err, Error, Result};
use crate::synth::SynthConfig;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "PENPRINT_OUT";
pub const DEFAULT_OUT: &str = "runs";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub arch: Option<String>,
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub level: Option<Level>,

    pub num_writers: Option<usize>,
    pub channel_widths: Option<[usize; 4]>,
    /// Divide widths and growth by four.
    pub quarter: Option<bool>,
    pub growth: Option<usize>,
    pub residual_scale: Option<f64>,
    pub input_height: Option<usize>,
    pub input_width: Option<usize>,

    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub lr_decay_factor: Option<f64>,
    pub lr_decay_every: Option<usize>,
    pub seed: Option<u64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,

    pub words_per_page: Option<usize>,
    pub pages_per_writer: Option<usize>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields of `top` win over `self`.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        overlay!(
            self,
            top,
            arch,
            manifest,
            out_dir,
            checkpoint,
            level,
            num_writers,
            channel_widths,
            quarter,
            growth,
            residual_scale,
            input_height,
            input_width,
            batch_size,
            epochs,
            lr,
            weight_decay,
            lr_decay_factor,
            lr_decay_every,
            seed,
            beta1,
            beta2,
            eps,
            words_per_page,
            pages_per_writer
        )
    }

    pub fn variant(&self) -> Result<Variant> {
        let name = self
            .arch
            .as_deref()
            .ok_or_else(|| Error::Config("no architecture given (use --arch or `arch`)".into()))?;
        Ok(name.parse()?)
    }

    /// Network configuration for `num_writers` classes unless the config
    /// names a count itself.
    pub fn net_config(&self, num_writers: usize) -> Result<NetConfig> {
        let mut cfg = NetConfig::new(self.variant()?, self.num_writers.unwrap_or(num_writers));
        if let Some(w) = self.channel_widths {
            cfg.channel_widths = w;
        }
        if let Some(g) = self.growth {
            cfg.growth = g;
        }
        if self.quarter == Some(true) {
            cfg = cfg.quarter();
        }
        if let Some(r) = self.residual_scale {
            cfg.residual_scale = r;
        }
        cfg.input_height = self.input_height.unwrap_or(cfg.input_height);
        cfg.input_width = self.input_width.unwrap_or(cfg.input_width);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            epochs: self.epochs.unwrap_or(d.epochs),
            lr: self.lr.unwrap_or(d.lr),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            lr_decay_factor: self.lr_decay_factor.unwrap_or(d.lr_decay_factor),
            lr_decay_every: self.lr_decay_every.unwrap_or(d.lr_decay_every),
            seed: self.seed.unwrap_or(d.seed),
            beta1: self.beta1.unwrap_or(d.beta1),
            beta2: self.beta2.unwrap_or(d.beta2),
            eps: self.eps.unwrap_or(d.eps),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synth_config(&self) -> SynthConfig {
        let d = SynthConfig::default();
        SynthConfig {
            num_writers: self.num_writers.unwrap_or(d.num_writers),
            words_per_page: self.words_per_page.unwrap_or(d.words_per_page),
            pages_per_writer: self.pages_per_writer.unwrap_or(d.pages_per_writer),
            seed: self.seed.unwrap_or(d.seed),
        }
    }

    /// `out_dir`, else `$PENPRINT_OUT`, else `runs`.
    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}
