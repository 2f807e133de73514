use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Result};
use crate::scalar::Real;

/// Max pooling without padding. Returns the pooled values and, per output
/// element, the flat input index of the window maximum (first one on ties).
pub fn maxpool_forward<T: Real>(
    x: &[T],
    dims: [usize; 4],
    kernel: usize,
    stride: usize,
) -> Result<(Vec<T>, Vec<u32>, [usize; 4])> {
    let [n, c, h, w] = dims;
    if kernel == 0 || stride == 0 || h < kernel || w < kernel {
        return dim_err("maxpool2d", format!("window {kernel}/{stride} on {h}x{w}"));
    }
    if kernel == stride && (h % stride != 0 || w % stride != 0) {
        return dim_err(
            "maxpool2d",
            format!("spatial dims {h}x{w} not divisible by stride {stride}"),
        );
    }
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut out = vec![T::ZERO; n * c * oh * ow];
    let mut arg = vec![0u32; n * c * oh * ow];
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + oy * stride * w + ox * stride;
                let mut best = x[best_idx];
                for ki in 0..kernel {
                    let row = base + (oy * stride + ki) * w + ox * stride;
                    for kj in 0..kernel {
                        let v = x[row + kj];
                        if v > best {
                            best = v;
                            best_idx = row + kj;
                        }
                    }
                }
                let o = (plane * oh + oy) * ow + ox;
                out[o] = best;
                arg[o] = best_idx as u32;
            }
        }
    }
    Ok((out, arg, [n, c, oh, ow]))
}

pub fn maxpool_backward<T: Real>(dy: &[T], argmax: &[u32], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::ZERO; input_len];
    for (g, &i) in dy.iter().zip(argmax) {
        dx[i as usize] += *g;
    }
    dx
}

/// Mean over each `H x W` plane.
pub fn global_avg_pool<T: Real>(x: &[T], dims: [usize; 4]) -> Vec<T> {
    let plane = dims[2] * dims[3];
    let scale = T::ONE / T::from_usize(plane);
    x.chunks_exact(plane)
        .map(|p| p.iter().copied().sum::<T>() * scale)
        .collect()
}

pub fn global_avg_pool_backward<T: Real>(dy: &[T], dims: [usize; 4]) -> Vec<T> {
    let plane = dims[2] * dims[3];
    let scale = T::ONE / T::from_usize(plane);
    let mut dx = Vec::with_capacity(dy.len() * plane);
    for g in dy {
        dx.extend(core::iter::repeat_n(*g * scale, plane));
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_window_maximum() {
        let (out, arg, dims) = maxpool_forward(&[1.0f32, 5.0, 3.0, 2.0], [1, 1, 2, 2], 2, 2).unwrap();
        assert_eq!(out, vec![5.0]);
        assert_eq!(arg, vec![1]);
        assert_eq!(dims, [1, 1, 1, 1]);
    }

    #[test]
    fn rejects_odd_dims() {
        assert!(maxpool_forward(&[0.0f32; 6], [1, 1, 2, 3], 2, 2).is_err());
    }

    #[test]
    fn average_of_plane() {
        assert_eq!(global_avg_pool(&[1.0f64, 2.0, 3.0, 6.0], [1, 1, 2, 2]), vec![3.0]);
    }
}
