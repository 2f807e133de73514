//! 8-bit grayscale PNG reading and writing.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use penprint_core::preprocess::GrayImage;

use crate::error::{io_err, Error, Result};

fn image_err(path: &Path, msg: impl ToString) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

/// Loads a PNG as grayscale. Colour images are reduced with Rec. 601 luma,
/// alpha is composited over white and 16-bit samples are truncated to 8.
pub fn read_png(path: &Path) -> Result<GrayImage> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| image_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| image_err(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let px = &buf[..info.buffer_size()];
    let channels = info.color_type.samples();
    let luma = |c: &[u8]| -> f32 {
        match c.len() {
            1 => c[0] as f32 / 255.0,
            2 => blend(c[0] as f32 / 255.0, c[1]),
            3 => rgb(c),
            _ => blend(rgb(c), c[3]),
        }
    };
    let pixels = px
        .chunks_exact(w * channels)
        .flat_map(|row| row.chunks_exact(channels).map(luma))
        .collect();
    Ok(GrayImage::new(h, w, pixels)?)
}

fn rgb(c: &[u8]) -> f32 {
    (0.299 * c[0] as f32 + 0.587 * c[1] as f32 + 0.114 * c[2] as f32) / 255.0
}

fn blend(v: f32, alpha: u8) -> f32 {
    let a = alpha as f32 / 255.0;
    v * a + (1.0 - a)
}

pub fn write_png(path: &Path, img: &GrayImage) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| image_err(path, e))?;
    writer.write_image_data(&img.to_u8()).map_err(|e| image_err(path, e))?;
    writer.finish().map_err(|e| image_err(path, e))
}
