use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Real;

/// Per-channel statistics of a `[N, C, H, W]` tensor: mean and biased variance.
pub fn channel_stats<T: Real>(x: &[T], dims: [usize; 4]) -> (Vec<T>, Vec<T>) {
    let [n, c, h, w] = dims;
    let plane = h * w;
    let count = T::from_usize(n * plane);
    let mut mean = vec![T::ZERO; c];
    let mut var = vec![T::ZERO; c];
    for ch in 0..c {
        let mut s = T::ZERO;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            s += x[off..off + plane].iter().copied().sum::<T>();
        }
        let m = s / count;
        let mut q = T::ZERO;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            q += x[off..off + plane].iter().map(|&v| (v - m) * (v - m)).sum::<T>();
        }
        mean[ch] = m;
        var[ch] = q / count;
    }
    (mean, var)
}

/// `y = gamma * (x - mean) * invstd + beta` per channel.
pub fn normalize<T: Real>(x: &[T], dims: [usize; 4], mean: &[T], invstd: &[T], gamma: &[T], beta: &[T]) -> Vec<T> {
    let [n, c, h, w] = dims;
    let plane = h * w;
    let mut out = vec![T::ZERO; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            let scale = gamma[ch] * invstd[ch];
            let shift = beta[ch] - mean[ch] * scale;
            for (o, &v) in out[off..off + plane].iter_mut().zip(&x[off..off + plane]) {
                *o = v * scale + shift;
            }
        }
    }
    out
}

pub struct NormGrads<T> {
    pub input: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

/// Backward of [`normalize`]. With `batch_stats` the mean and variance are
/// functions of `x` (training); otherwise they are constants (evaluation).
pub fn normalize_backward<T: Real>(
    x: &[T],
    dims: [usize; 4],
    mean: &[T],
    invstd: &[T],
    gamma: &[T],
    dy: &[T],
    batch_stats: bool,
) -> NormGrads<T> {
    let [n, c, h, w] = dims;
    let plane = h * w;
    let count = T::from_usize(n * plane);
    let mut dx = vec![T::ZERO; x.len()];
    let mut dgamma = vec![T::ZERO; c];
    let mut dbeta = vec![T::ZERO; c];
    for ch in 0..c {
        let (m, is) = (mean[ch], invstd[ch]);
        let mut sum_dy = T::ZERO;
        let mut sum_dy_xhat = T::ZERO;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            for (&g, &v) in dy[off..off + plane].iter().zip(&x[off..off + plane]) {
                sum_dy += g;
                sum_dy_xhat += g * (v - m) * is;
            }
        }
        dgamma[ch] = sum_dy_xhat;
        dbeta[ch] = sum_dy;
        let k = gamma[ch] * is;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            for ((d, &g), &v) in dx[off..off + plane]
                .iter_mut()
                .zip(&dy[off..off + plane])
                .zip(&x[off..off + plane])
            {
                *d = if batch_stats {
                    let xhat = (v - m) * is;
                    k * (g - sum_dy / count - xhat * sum_dy_xhat / count)
                } else {
                    k * g
                };
            }
        }
    }
    NormGrads {
        input: dx,
        gamma: dgamma,
        beta: dbeta,
    }
}
