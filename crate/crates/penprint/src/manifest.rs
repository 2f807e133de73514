//! Flat dataset manifests: one `image_path, writer_id, page_id, split` record
//! per line, `#` starts a comment.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("split must be `train` or `test`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    /// Resolved against the manifest directory when relative.
    pub image_path: PathBuf,
    pub writer_id: usize,
    pub page_id: String,
    pub split: Split,
}

/// Parses manifest text. Relative image paths are joined onto `base`;
/// `origin` only labels errors.
pub fn parse_manifest(text: &str, base: &Path, origin: &Path) -> Result<Vec<SampleRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: String| Error::Manifest {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        let [path, writer, page, split] = fields[..] else {
            return Err(err(format!(
                "expected 4 fields `image_path, writer_id, page_id, split`, found {}",
                fields.len()
            )));
        };
        if path.is_empty() || page.is_empty() {
            return Err(err("empty image_path or page_id".into()));
        }
        let writer_id = writer
            .parse::<usize>()
            .map_err(|_| err(format!("writer_id `{writer}` is not a non-negative integer")))?;
        let split = split.parse::<Split>().map_err(err)?;
        let image_path = base.join(path);
        if !seen.insert(image_path.clone()) {
            return Err(err(format!("duplicate image_path `{path}`")));
        }
        records.push(SampleRecord {
            image_path,
            writer_id,
            page_id: page.to_string(),
            split,
        });
    }
    Ok(records)
}

/// Reads, parses and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let records = parse_manifest(&text, base, path)?;
    validate(&records)?;
    Ok(records)
}

/// Closed-set checks: both splits non-empty, every test writer seen in
/// training, and no page shared between writers.
pub fn validate(records: &[SampleRecord]) -> Result<()> {
    let writers = |split| -> BTreeSet<usize> {
        records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| r.writer_id)
            .collect()
    };
    let (train, test) = (writers(Split::Train), writers(Split::Test));
    if train.is_empty() {
        return Err(Error::Dataset("no training records".into()));
    }
    let unseen: Vec<usize> = test.difference(&train).copied().collect();
    if !unseen.is_empty() {
        return Err(Error::Dataset(format!(
            "writers {unseen:?} appear in the test split but not in training"
        )));
    }
    let mut page_writer = std::collections::HashMap::new();
    for r in records {
        let w = *page_writer.entry(r.page_id.as_str()).or_insert(r.writer_id);
        if w != r.writer_id {
            return Err(Error::Dataset(format!(
                "page `{}` is attributed to writers {w} and {}",
                r.page_id, r.writer_id
            )));
        }
    }
    Ok(())
}

/// Number of output classes: writer ids index classes directly.
pub fn num_writers(records: &[SampleRecord]) -> usize {
    records.iter().map(|r| r.writer_id + 1).max().unwrap_or(0)
}

pub fn split(records: &[SampleRecord], which: Split) -> impl Iterator<Item = &SampleRecord> {
    records.iter().filter(move |r| r.split == which)
}

/// Writes records with paths relative to the manifest directory when
/// possible.
pub fn write_manifest(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = String::from("# image_path, writer_id, page_id, split\n");
    for r in records {
        let p = r.image_path.strip_prefix(base).unwrap_or(&r.image_path);
        out.push_str(&format!(
            "{}, {}, {}, {}\n",
            p.display(),
            r.writer_id,
            r.page_id,
            r.split
        ));
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Visiting order of `len` items in `epoch`: a ChaCha8 shuffle on stream
/// `epoch` of `seed`, so every epoch is reproducible on its own.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

/// Shuffled batches of indices into `0..len`; the last batch may be short.
pub fn iterate_batches(len: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch size must be positive");
    epoch_order(len, seed, epoch)
        .chunks(batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}
