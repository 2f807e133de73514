//! Word-level predictions: per-head softmax and the arithmetic mean over heads.

use alloc::vec::Vec;

use crate::graph::softmax_in_place;
use crate::tensor::argmax;

/// Probability distribution over writers for one word image.
#[derive(Debug, Clone, PartialEq)]
pub struct WordPrediction {
    /// Mean of `per_head`.
    pub probs: Vec<f64>,
    /// Softmax of every head (one entry for SA-Net, three for MSRF, five
    /// patches plus the global head for PatchNet).
    pub per_head: Vec<Vec<f64>>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p
}

/// Element-wise arithmetic mean of equally long probability vectors.
///
/// Each component is summed in ascending order of value, so the result is
/// bit-identical under any reordering of `vectors`.
pub fn mean_distribution(vectors: &[Vec<f64>]) -> Vec<f64> {
    let k = vectors.first().map_or(0, Vec::len);
    let n = vectors.len() as f64;
    let mut column = Vec::with_capacity(vectors.len());
    (0..k)
        .map(|j| {
            column.clear();
            column.extend(vectors.iter().map(|v| v[j]));
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / n
        })
        .collect()
}

impl WordPrediction {
    pub fn from_head_logits(heads: &[Vec<f64>]) -> Self {
        let per_head: Vec<Vec<f64>> = heads.iter().map(|l| softmax(l)).collect();
        Self {
            probs: mean_distribution(&per_head),
            per_head,
        }
    }

    /// Predicted writer; ties go to the lowest index.
    pub fn writer(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Class indices ordered by decreasing probability, ties by increasing index.
pub fn ranking(probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx
}

/// Whether `label` is among the `k` highest-ranked classes.
pub fn in_top_k(probs: &[f64], label: usize, k: usize) -> bool {
    let p = probs[label];
    // Classes ranked ahead of `label`: strictly larger, or equal with a lower index.
    let ahead = probs
        .iter()
        .enumerate()
        .filter(|&(i, &q)| q > p || (q == p && i < label))
        .count();
    ahead < k
}
