//! Word image normalisation and patch extraction.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::arch::config::NUM_PATCHES;
use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

/// Grayscale image with intensities in `[0, 1]`, white = 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    /// Row-major.
    pub pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::ShapeData {
                shape: vec![height, width],
                len: pixels.len(),
            });
        }
        Ok(Self { height, width, pixels })
    }

    /// From 8-bit samples, 255 = white.
    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Quantised to 8 bits with rounding.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0 + 0.5) as u8)
            .collect()
    }
}

/// Bilinear resampling with half-pixel centres and clamped borders.
pub fn resize_bilinear(img: &GrayImage, height: usize, width: usize) -> GrayImage {
    if height == img.height && width == img.width {
        return img.clone();
    }
    let sy = img.height as f64 / height as f64;
    let sx = img.width as f64 / width as f64;
    let taps = |o: usize, scale: f64, extent: usize| -> (usize, usize, f32) {
        let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src as usize).min(extent - 1);
        let i1 = (i0 + 1).min(extent - 1);
        (i0, i1, (src - i0 as f64) as f32)
    };
    let cols: Vec<_> = (0..width).map(|x| taps(x, sx, img.width)).collect();
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        let (y0, y1, fy) = taps(y, sy, img.height);
        for &(x0, x1, fx) in &cols {
            let top = img.get(y0, x0) * (1.0 - fx) + img.get(y0, x1) * fx;
            let bottom = img.get(y1, x0) * (1.0 - fx) + img.get(y1, x1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    GrayImage {
        height,
        width,
        pixels: out,
    }
}

/// Placement of the resized content inside the output canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Scale `s = min(out_h / H, out_w / W)`, content block
/// `(round(s H), round(s W))`, centred.
pub fn placement(height: usize, width: usize, out_h: usize, out_w: usize) -> Placement {
    let s = (out_h as f64 / height as f64).min(out_w as f64 / width as f64);
    let h = (libm::round(s * height as f64) as usize).clamp(1, out_h);
    let w = (libm::round(s * width as f64) as usize).clamp(1, out_w);
    Placement {
        top: (out_h - h) / 2,
        left: (out_w - w) / 2,
        height: h,
        width: w,
    }
}

/// Aspect-preserving resize onto a white `out_h x out_w` canvas, returned as
/// a `[1, out_h, out_w]` tensor.
pub fn preprocess(img: &GrayImage, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    if img.height == 0 || img.width == 0 {
        return Err(Error::Config(format!("empty image ({}x{})", img.height, img.width)));
    }
    let p = placement(img.height, img.width, out_h, out_w);
    let content = resize_bilinear(img, p.height, p.width);
    let mut canvas = vec![1.0f32; out_h * out_w];
    for y in 0..p.height {
        let dst = (p.top + y) * out_w + p.left;
        canvas[dst..dst + p.width].copy_from_slice(&content.pixels[y * p.width..(y + 1) * p.width]);
    }
    Tensor::new(&[1, out_h, out_w], canvas)
}

/// Left edges of the `NUM_PATCHES` square windows of side `side` spread with
/// a uniform integer stride over `width` columns.
pub fn patch_offsets(width: usize, side: usize) -> Result<[usize; NUM_PATCHES]> {
    if side > width || !(width - side).is_multiple_of(NUM_PATCHES - 1) {
        return dim_err(
            "patch_offsets",
            format!("{NUM_PATCHES} windows of width {side} do not tile width {width} with a uniform stride"),
        );
    }
    let stride = (width - side) / (NUM_PATCHES - 1);
    Ok(core::array::from_fn(|i| i * stride))
}

/// Square patches of a `[C, H, W]` word tensor, each `[C, H, H]`.
pub fn extract_patches<T: crate::scalar::Real>(word: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    if word.rank() != 3 {
        return dim_err("extract_patches", format!("expected [C,H,W], got {:?}", word.shape()));
    }
    let (h, w) = (word.shape()[1], word.shape()[2]);
    patch_offsets(w, h)?.iter().map(|&o| word.narrow(2, o, h)).collect()
}
