//! `.lmck` checkpoints:
//!
//! ```text
//! b"LMCK" | version u32 | config_len u32 | config (UTF-8 `key=value` lines)
//! | tensor_count u32 | per tensor: name_len u32, name, rank u32, dims u32 x rank, f32 x prod(dims)
//! ```
//!
//! All integers and scalars little-endian.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{Architecture, Model, ModelConfig, ModelParams, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("not a checkpoint (magic {0:?})")]
    BadMagic(Vec<u8>),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("bad checkpoint config: {0}")]
    Config(String),
    #[error("tensors do not match the stored config: {0}")]
    ShapeMismatch(String),
}

fn config_text(cfg: &ModelConfig) -> String {
    format!(
        "levels={}\nbase_channels={}\nin_channels={}\nout_channels={}\nleaky_slope={:?}\nstrategy={}\nseed={}\n",
        cfg.levels, cfg.base_channels, cfg.in_channels, cfg.out_channels, cfg.leaky_slope, cfg.strategy, cfg.seed
    )
}

fn parse_config(text: &str) -> Result<ModelConfig, CheckpointError> {
    let mut cfg = ModelConfig::default();
    let mut seen = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CheckpointError::Config(format!("line without '=': {line:?}")))?;
        let bad = |e: &dyn std::fmt::Display| CheckpointError::Config(format!("{key}: {e}"));
        match key {
            "levels" => cfg.levels = value.parse().map_err(|e| bad(&e))?,
            "base_channels" => cfg.base_channels = value.parse().map_err(|e| bad(&e))?,
            "in_channels" => cfg.in_channels = value.parse().map_err(|e| bad(&e))?,
            "out_channels" => cfg.out_channels = value.parse().map_err(|e| bad(&e))?,
            "leaky_slope" => cfg.leaky_slope = value.parse().map_err(|e| bad(&e))?,
            "strategy" => cfg.strategy = value.parse().map_err(|e| bad(&e))?,
            "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
            other => return Err(CheckpointError::Config(format!("unknown key {other:?}"))),
        }
        seen.push(key.to_string());
    }
    if seen.len() != 7 {
        return Err(CheckpointError::Config(format!("expected 7 keys, found {}", seen.len())));
    }
    Ok(cfg)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION as usize);
    let text = config_text(model.config());
    put_u32(&mut out, text.len());
    out.extend_from_slice(text.as_bytes());
    let entries = model.params().entries();
    put_u32(&mut out, entries.len());
    for (name, t) in entries {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape.len());
        for &d in &t.shape {
            put_u32(&mut out, d);
        }
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(self.bytes.len()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(bytes[..bytes.len().min(4)].to_vec()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let len = r.u32()?;
    let text = std::str::from_utf8(r.take(len)?).map_err(|e| CheckpointError::Config(e.to_string()))?;
    let cfg = parse_config(text)?;
    let arch = Architecture::new(&cfg).map_err(|e| CheckpointError::Config(e.to_string()))?;
    let count = r.u32()?;
    if count != arch.tensor_specs().len() {
        return Err(CheckpointError::ShapeMismatch(format!(
            "{count} tensors stored, config implies {}",
            arch.tensor_specs().len()
        )));
    }
    let mut entries = Vec::with_capacity(count);
    for (spec_name, spec_shape) in arch.tensor_specs() {
        let name_len = r.u32()?;
        let name = String::from_utf8_lossy(r.take(name_len)?).into_owned();
        let rank = r.u32()?;
        if rank > 8 {
            return Err(CheckpointError::ShapeMismatch(format!("{name}: rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        if &name != spec_name || &shape != spec_shape {
            return Err(CheckpointError::ShapeMismatch(format!(
                "found {name} {shape:?}, expected {spec_name} {spec_shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or(CheckpointError::Truncated(bytes.len()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        entries.push((name, Tensor { shape, data }));
    }
    Model::from_parts(cfg, ModelParams::from_entries(entries))
        .map_err(|e| CheckpointError::ShapeMismatch(e.to_string()))
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let err = |source| CheckpointError::Io { path: path.display().to_string(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(err)?;
    }
    fs::write(path, encode_checkpoint(model)).map_err(err)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model, CheckpointError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    decode_checkpoint(&bytes)
}
