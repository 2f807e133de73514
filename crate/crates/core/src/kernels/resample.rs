use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Real;

/// Source index pair and interpolation weight for one output coordinate of a
/// 2x bilinear upsample with half-pixel centres (`align_corners = false`).
fn taps(out: usize, in_len: usize) -> (usize, usize, f64) {
    let src = ((out as f64 + 0.5) / 2.0 - 0.5).max(0.0);
    let lo = (src as usize).min(in_len - 1);
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, src - lo as f64)
}

pub fn upsample2x_forward<T: Real>(x: &[T], dims: [usize; 4]) -> Vec<T> {
    let [n, c, h, w] = dims;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::ZERO; n * c * oh * ow];
    let xt: Vec<_> = (0..ow).map(|ox| taps(ox, w)).collect();
    for plane in 0..n * c {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
        for oy in 0..oh {
            let (y0, y1, fy) = taps(oy, h);
            let fy = T::from_f64(fy);
            for (ox, &(x0, x1, fx)) in xt.iter().enumerate() {
                let fx = T::from_f64(fx);
                let top = src[y0 * w + x0] * (T::ONE - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (T::ONE - fx) + src[y1 * w + x1] * fx;
                dst[oy * ow + ox] = top * (T::ONE - fy) + bot * fy;
            }
        }
    }
    out
}

pub fn upsample2x_backward<T: Real>(dy: &[T], dims: [usize; 4]) -> Vec<T> {
    let [n, c, h, w] = dims;
    let (oh, ow) = (2 * h, 2 * w);
    let mut dx = vec![T::ZERO; n * c * h * w];
    let xt: Vec<_> = (0..ow).map(|ox| taps(ox, w)).collect();
    for plane in 0..n * c {
        let g = &dy[plane * oh * ow..(plane + 1) * oh * ow];
        let d = &mut dx[plane * h * w..(plane + 1) * h * w];
        for oy in 0..oh {
            let (y0, y1, fy) = taps(oy, h);
            let fy = T::from_f64(fy);
            for (ox, &(x0, x1, fx)) in xt.iter().enumerate() {
                let fx = T::from_f64(fx);
                let v = g[oy * ow + ox];
                let top = v * (T::ONE - fy);
                let bot = v * fy;
                d[y0 * w + x0] += top * (T::ONE - fx);
                d[y0 * w + x1] += top * fx;
                d[y1 * w + x0] += bot * (T::ONE - fx);
                d[y1 * w + x1] += bot * fx;
            }
        }
    }
    dx
}
