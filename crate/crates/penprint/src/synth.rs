//! Synthetic handwriting corpus for desk-scale runs.
//!
//! All writers share one procedural alphabet. Each writer draws it with a
//! personal style: slant, pen width, glyph size and proportions, spacing,
//! stroke wobble, ink darkness and slightly displaced control points of every
//! letterform. Words are random glyph sequences, so content says nothing
//! about the writer.

use std::fs;
use std::path::{Path, PathBuf};

use penprint_core::preprocess::GrayImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::image_io::write_png;
use crate::manifest::{write_manifest, SampleRecord, Split};

pub const ALPHABET_SIZE: usize = 26;
pub const CANVAS_HEIGHT: usize = 64;
const ALPHABET_SEED: u64 = 0x5EED_A1FA;
const MAX_WORD_LEN: usize = 6;

type Stroke = Vec<[f32; 2]>;
type Glyph = Vec<Stroke>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_writers: usize,
    pub words_per_page: usize,
    pub pages_per_writer: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_writers: 10,
            words_per_page: 20,
            pages_per_writer: 2,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_writers < 2 || self.words_per_page == 0 || self.pages_per_writer < 2 {
            return Err(Error::Config(format!(
                "synthetic corpus needs >= 2 writers, >= 1 word per page and >= 2 pages per writer: {self:?}"
            )));
        }
        Ok(())
    }

    /// Odd-numbered pages form the test split.
    pub fn split_of(page: usize) -> Split {
        if page % 2 == 1 {
            Split::Test
        } else {
            Split::Train
        }
    }
}

/// Drawing parameters of one synthetic writer.
#[derive(Debug, Clone, PartialEq)]
pub struct Style {
    /// Horizontal shear per unit of height.
    pub slant: f32,
    /// Pen width in pixels.
    pub thickness: f32,
    /// Glyph height in pixels.
    pub x_height: f32,
    /// Glyph width relative to its height.
    pub width_scale: f32,
    /// Gap between glyphs relative to glyph width.
    pub spacing: f32,
    /// Amplitude of stroke noise relative to glyph height.
    pub wobble: f32,
    /// Ink intensity, 0 = black.
    pub ink: f32,
    glyphs: Vec<Glyph>,
}

fn alphabet() -> Vec<Glyph> {
    let mut rng = ChaCha8Rng::seed_from_u64(ALPHABET_SEED);
    (0..ALPHABET_SIZE)
        .map(|_| {
            (0..rng.random_range(1..=3))
                .map(|_| {
                    let mut p = [rng.random::<f32>(), rng.random::<f32>()];
                    let mut stroke = vec![p];
                    for _ in 0..rng.random_range(2..=4) {
                        p = [
                            (p[0] + rng.random_range(-0.6..0.6f32)).clamp(0.0, 1.0),
                            (p[1] + rng.random_range(-0.7..0.7f32)).clamp(0.0, 1.0),
                        ];
                        stroke.push(p);
                    }
                    stroke
                })
                .collect()
        })
        .collect()
}

/// `n` values spread over `[lo, hi)`, one per stratum, in random order.
fn stratified(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    let mut strata: Vec<usize> = (0..n).collect();
    strata.shuffle(rng);
    strata
        .into_iter()
        .map(|k| lo + (hi - lo) * (k as f32 + rng.random_range(0.2..0.8f32)) / n as f32)
        .collect()
}

pub fn writer_styles(cfg: &SynthConfig) -> Vec<Style> {
    let n = cfg.num_writers;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let slant = stratified(&mut rng, n, -0.6, 0.6);
    let thickness = stratified(&mut rng, n, 1.2, 4.2);
    let x_height = stratified(&mut rng, n, 22.0, 40.0);
    let width_scale = stratified(&mut rng, n, 0.5, 1.1);
    let spacing = stratified(&mut rng, n, 0.0, 0.6);
    let wobble = stratified(&mut rng, n, 0.0, 0.06);
    let ink = stratified(&mut rng, n, 0.0, 0.4);
    let base = alphabet();
    (0..n)
        .map(|w| {
            let glyphs = base
                .iter()
                .map(|g| {
                    g.iter()
                        .map(|s| {
                            s.iter()
                                .map(|p| {
                                    [
                                        (p[0] + rng.random_range(-0.15..0.15f32)).clamp(0.0, 1.0),
                                        (p[1] + rng.random_range(-0.15..0.15f32)).clamp(0.0, 1.0),
                                    ]
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            Style {
                slant: slant[w],
                thickness: thickness[w],
                x_height: x_height[w],
                width_scale: width_scale[w],
                spacing: spacing[w],
                wobble: wobble[w],
                ink: ink[w],
                glyphs,
            }
        })
        .collect()
}

fn draw_segment(img: &mut GrayImage, a: [f32; 2], b: [f32; 2], radius: f32, ink: f32) {
    let pad = radius + 1.0;
    let x0 = (a[0].min(b[0]) - pad).floor().max(0.0) as usize;
    let y0 = (a[1].min(b[1]) - pad).floor().max(0.0) as usize;
    let x1 = ((a[0].max(b[0]) + pad).ceil() as usize).min(img.width);
    let y1 = ((a[1].max(b[1]) + pad).ceil() as usize).min(img.height);
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = (d[0] * d[0] + d[1] * d[1]).max(1e-12);
    for y in y0..y1 {
        for x in x0..x1 {
            let p = [x as f32 + 0.5 - a[0], y as f32 + 0.5 - a[1]];
            let t = ((p[0] * d[0] + p[1] * d[1]) / len2).clamp(0.0, 1.0);
            let dist = ((p[0] - t * d[0]).powi(2) + (p[1] - t * d[1]).powi(2)).sqrt();
            let cover = (radius + 0.5 - dist).clamp(0.0, 1.0);
            let v = 1.0 - cover * (1.0 - ink);
            let px = &mut img.pixels[y * img.width + x];
            *px = px.min(v);
        }
    }
}

/// Renders glyph indices as one word image of height [`CANVAS_HEIGHT`].
pub fn render_word(style: &Style, word: &[usize], rng: &mut ChaCha8Rng) -> GrayImage {
    let size = style.x_height * (1.0 + rng.random_range(-0.05..0.05f32));
    let slant = style.slant + rng.random_range(-0.05..0.05f32);
    let gw = size * style.width_scale;
    let step = gw * (1.0 + style.spacing);
    let margin = style.thickness + 4.0;
    let lean = slant.abs() * size;
    let width = (2.0 * margin + word.len() as f32 * step + lean).ceil() as usize;
    let top = (CANVAS_HEIGHT as f32 - size) / 2.0 + rng.random_range(-3.0..3.0f32);
    let left = margin + if slant < 0.0 { lean } else { 0.0 };
    let mut img = GrayImage::filled(CANVAS_HEIGHT, width, 1.0);
    let amp = style.wobble * size;
    for (k, &g) in word.iter().enumerate() {
        let origin = left + k as f32 * step;
        for stroke in &style.glyphs[g] {
            let pts: Vec<[f32; 2]> = stroke
                .iter()
                .map(|p| [origin + p[0] * gw + slant * (1.0 - p[1]) * size, top + p[1] * size])
                .collect();
            let mut prev = pts[0];
            for pair in pts.windows(2) {
                for s in 1..=4 {
                    let t = s as f32 / 4.0;
                    let mut q = [
                        pair[0][0] + t * (pair[1][0] - pair[0][0]),
                        pair[0][1] + t * (pair[1][1] - pair[0][1]),
                    ];
                    if s < 4 {
                        q[0] += amp * rng.random_range(-1.0..1.0f32);
                        q[1] += amp * rng.random_range(-1.0..1.0f32);
                    }
                    draw_segment(&mut img, prev, q, style.thickness / 2.0, style.ink);
                    prev = q;
                }
            }
        }
    }
    img
}

/// One generated word.
#[derive(Debug, Clone)]
pub struct SynthWord {
    pub writer: usize,
    pub page: usize,
    pub index: usize,
    pub image: GrayImage,
}

impl SynthWord {
    pub fn page_id(&self) -> String {
        format!("w{:03}_p{}", self.writer, self.page)
    }

    pub fn file_name(&self) -> String {
        format!("{}_{:03}.png", self.page_id(), self.index)
    }
}

/// Every word of the corpus, ordered by writer, page, word.
pub fn generate_words(cfg: &SynthConfig) -> Result<Vec<SynthWord>> {
    cfg.validate()?;
    let styles = writer_styles(cfg);
    let mut out = Vec::with_capacity(cfg.num_writers * cfg.pages_per_writer * cfg.words_per_page);
    for (writer, style) in styles.iter().enumerate() {
        for page in 0..cfg.pages_per_writer {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(1 + (writer * cfg.pages_per_writer + page) as u64);
            for index in 0..cfg.words_per_page {
                let len = rng.random_range(3..=MAX_WORD_LEN);
                let word: Vec<usize> = (0..len).map(|_| rng.random_range(0..ALPHABET_SIZE)).collect();
                out.push(SynthWord {
                    writer,
                    page,
                    index,
                    image: render_word(style, &word, &mut rng),
                });
            }
        }
    }
    Ok(out)
}

/// Writes `images/*.png` and `manifest.csv` under `dir`; returns the manifest
/// path and records.
pub fn generate(cfg: &SynthConfig, dir: &Path) -> Result<(PathBuf, Vec<SampleRecord>)> {
    let words = generate_words(cfg)?;
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(io_err(&images))?;
    let mut records = Vec::with_capacity(words.len());
    for w in &words {
        let path = images.join(w.file_name());
        write_png(&path, &w.image)?;
        records.push(SampleRecord {
            image_path: path,
            writer_id: w.writer,
            page_id: w.page_id(),
            split: SynthConfig::split_of(w.page),
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &records)?;
    Ok((manifest, records))
}
