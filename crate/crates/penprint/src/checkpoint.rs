//! Binary checkpoints.
//!
//! Layout (little endian):
//! `PENPRINT` magic, `u32` version, `u32` header length, JSON header,
//! `u32` tensor count, then per tensor: `u32` name length, UTF-8 name,
//! `u8` kind (0 trainable, 1 buffer), `u32` rank, `u64` dims, `f32` values.
//! The file ends with the SHA-256 of everything before it.
//! Optimiser moments are not stored.

use std::fs;
use std::path::{Path, PathBuf};

use penprint_core::nn::params::ParamKind;
use penprint_core::{Model, NetConfig, Tensor, TrainConfig, Variant};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, Result};

const MAGIC: &[u8; 8] = b"PENPRINT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub arch: Variant,
    /// SHA-256 over the network and training configuration.
    pub config_hash: String,
    /// Epochs completed.
    pub epoch: usize,
    /// Seed of the per-epoch shuffle; epoch `e` draws from ChaCha8 stream `e`.
    pub rng_state: u64,
    pub net: NetConfig,
    pub train: TrainConfig,
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(net: &NetConfig, train: &TrainConfig) -> String {
    let mut h = Sha256::new();
    h.update(net.canonical().as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_string(train).expect("serialisable").as_bytes());
    hex(&h.finalize())
}

pub fn header_for(model: &Model<f32>, train: &TrainConfig, epoch: usize) -> Header {
    Header {
        arch: model.config.variant,
        config_hash: config_hash(&model.config, train),
        epoch,
        rng_state: train.seed,
        net: model.config.clone(),
        train: train.clone(),
    }
}

pub fn encode(model: &Model<f32>, header: &Header) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let json = serde_json::to_vec(header).expect("serialisable");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let entries = model.params.entries();
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.push(match e.kind {
            ParamKind::Trainable => 0,
            ParamKind::Buffer => 1,
        });
        out.extend_from_slice(&(e.value.rank() as u32).to_le_bytes());
        for &d in e.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in e.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn save(path: &Path, model: &Model<f32>, header: &Header) -> Result<()> {
    fs::write(path, encode(model, header)).map_err(io_err(path))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<(Model<f32>, Header), String> {
    if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
        return Err("not a checkpoint file".into());
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err("checksum mismatch".into());
    }
    let mut c = Cursor {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = c.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let n = c.u32()? as usize;
    let header: Header = serde_json::from_slice(c.take(n)?).map_err(|e| format!("header: {e}"))?;
    if header.config_hash != config_hash(&header.net, &header.train) {
        return Err("config hash does not match header".into());
    }
    let mut model = Model::<f32>::new(header.net.clone(), 0).map_err(|e| e.to_string())?;
    let count = c.u32()? as usize;
    if count != model.params.len() {
        return Err(format!("{count} tensors stored, model has {}", model.params.len()));
    }
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|e| e.to_string())?
            .to_string();
        let kind = c.take(1)?[0];
        let rank = c.u32()? as usize;
        let shape = (0..rank)
            .map(|_| c.u64().map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let numel: usize = shape.iter().product();
        let raw = c.take(numel.checked_mul(4).ok_or("tensor too large")?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let id = model
            .params
            .id(&name)
            .ok_or_else(|| format!("unknown tensor `{name}`"))?;
        let expect = match model.params.entry(id).kind {
            ParamKind::Trainable => 0,
            ParamKind::Buffer => 1,
        };
        if kind != expect {
            return Err(format!("tensor `{name}` has kind {kind}, expected {expect}"));
        }
        let t = Tensor::new(&shape, data).map_err(|e| e.to_string())?;
        model.params.assign(&name, t).map_err(|e| e.to_string())?;
    }
    if c.pos != body.len() {
        return Err("trailing bytes".into());
    }
    Ok((model, header))
}

pub fn load(path: &Path) -> Result<(Model<f32>, Header)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes).map_err(|msg| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    })
}

pub fn epoch_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch-{epoch:03}.ckpt"))
}
