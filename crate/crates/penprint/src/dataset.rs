//! Preprocessed word images held in memory.

use penprint_core::preprocess::preprocess;
use penprint_core::{NetConfig, Tensor};

use crate::error::Result;
use crate::image_io::read_png;
use crate::manifest::{SampleRecord, Split};

#[derive(Debug, Clone)]
pub struct Sample {
    pub record: SampleRecord,
    /// `[1, H, W]`, white = 1.0.
    pub image: Tensor<f32>,
}

/// Reads and preprocesses every record to `height x width`.
pub fn load_samples(records: &[SampleRecord], height: usize, width: usize) -> Result<Vec<Sample>> {
    records
        .iter()
        .map(|r| {
            let img = read_png(&r.image_path)?;
            Ok(Sample {
                record: r.clone(),
                image: preprocess(&img, height, width)?,
            })
        })
        .collect()
}

pub fn load_for(records: &[SampleRecord], cfg: &NetConfig) -> Result<Vec<Sample>> {
    load_samples(records, cfg.input_height, cfg.input_width)
}

pub fn of_split(samples: &[Sample], split: Split) -> Vec<&Sample> {
    samples.iter().filter(|s| s.record.split == split).collect()
}

/// Stacks `[1, H, W]` images into `[N, 1, H, W]`.
pub fn stack(samples: &[&Sample]) -> Tensor<f32> {
    let shape = samples[0].image.shape();
    let mut data = Vec::with_capacity(samples.len() * samples[0].image.len());
    for s in samples {
        data.extend_from_slice(s.image.data());
    }
    Tensor::new(&[samples.len(), shape[0], shape[1], shape[2]], data).expect("uniform sample shapes")
}

pub fn labels(samples: &[&Sample]) -> Vec<usize> {
    samples.iter().map(|s| s.record.writer_id).collect()
}
