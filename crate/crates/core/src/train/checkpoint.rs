//! Checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"BVAECKPT"            magic, 8 bytes
//! u32                    format version
//! u64                    header length H
//! [u8; H]                JSON header (config, epoch, histories, RNG
//!                        state, centroids, tensor names and shapes)
//! f32 * Σ numel          tensor blocks in header order
//! u64                    first 8 bytes of SHA-256 over everything above
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::branch::{Branch, ClassCentroids};
use crate::error::{BvaeError, Result};
use crate::nn::AdamState;
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::vae::{LossBreakdown, VaeArch, VaeModel};

use super::config::TrainConfig;
use super::trainer::{Checkpoint, EpochRecord};

pub const MAGIC: &[u8; 8] = b"BVAECKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    code_version: String,
    config: TrainConfig,
    arch: VaeArch,
    epoch: usize,
    adam_step: u64,
    eps_rng: RngState,
    centroids: Option<ClassCentroids>,
    initial_eval: Option<LossBreakdown>,
    history: Vec<EpochRecord>,
    tensors: Vec<TensorEntry>,
}

fn checksum(bytes: &[u8]) -> u64 {
    u64::from_le_bytes(Sha256::digest(bytes)[..8].try_into().expect("sha256 output"))
}

/// Parameter tensors in optimizer order with their names.
fn named_params(ck: &Checkpoint) -> Vec<(String, &Tensor<f32>)> {
    fn push<'a>(out: &mut Vec<(String, &'a Tensor<f32>)>, prefix: &str, seq: &'a crate::nn::Sequential<f32>) {
        for (i, l) in seq.layers.iter().enumerate() {
            for (j, p) in l.params.iter().enumerate() {
                out.push((format!("{prefix}.{i}.{}", if j == 0 { "w" } else { "b" }), p));
            }
        }
    }
    let mut out = Vec::new();
    push(&mut out, "encoder", &ck.model.encoder);
    push(&mut out, "decoder", &ck.model.decoder);
    if let Some(h) = ck.branch.as_ref().and_then(|b| b.head.as_ref()) {
        push(&mut out, "branch", h);
    }
    out
}

/// Serializes the checkpoint to bytes.
pub fn checkpoint_bytes(ck: &Checkpoint) -> Result<Vec<u8>> {
    let params = named_params(ck);
    let mut tensors: Vec<(String, &Tensor<f32>)> = params.clone();
    for (i, m) in ck.adam.m.iter().enumerate() {
        tensors.push((format!("adam.m.{i}"), m));
    }
    for (i, v) in ck.adam.v.iter().enumerate() {
        tensors.push((format!("adam.v.{i}"), v));
    }
    let header = Header {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: ck.config.clone(),
        arch: ck.model.arch.clone(),
        epoch: ck.epoch,
        adam_step: ck.adam.step,
        eps_rng: RngState::capture(&ck.eps_rng),
        centroids: ck.branch.as_ref().and_then(|b| b.centroids.clone()),
        initial_eval: ck.initial_eval,
        history: ck.history.clone(),
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let numel: usize = tensors.iter().map(|(_, t)| t.len()).sum();
    let mut buf = Vec::with_capacity(24 + json.len() + 4 * numel + 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, t) in &tensors {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = checksum(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    Ok(buf)
}

/// Writes the checkpoint atomically (temporary file, then rename).
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(ck)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| BvaeError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| BvaeError::io(path, e))?;
    std::fs::rename(&tmp, path).map_err(|e| BvaeError::io(path, e))
}

fn corrupt(msg: impl Into<String>) -> BvaeError {
    BvaeError::Checkpoint(msg.into())
}

/// Parses checkpoint bytes, verifying magic, version and checksum.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 28 {
        return Err(corrupt("file is truncated"));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body_end = bytes.len() - 8;
    if 20 + hlen > body_end {
        return Err(corrupt("file is truncated"));
    }
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().expect("8 bytes"));
    if checksum(&bytes[..body_end]) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let header: Header =
        serde_json::from_slice(&bytes[20..20 + hlen]).map_err(|e| corrupt(format!("bad header: {e}")))?;
    let mut pos = 20 + hlen;
    let mut blocks = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        if pos + 4 * n > body_end {
            return Err(corrupt(format!("tensor {} is truncated", entry.name)));
        }
        let data = bytes[pos..pos + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        blocks.push(Tensor::from_vec(&entry.shape, data)?);
        pos += 4 * n;
    }
    if pos != body_end {
        return Err(corrupt("trailing bytes after tensor blocks"));
    }
    rebuild(header, blocks)
}

fn rebuild(header: Header, blocks: Vec<Tensor<f32>>) -> Result<Checkpoint> {
    let cfg = header.config;
    let mut model = VaeModel::<f32>::new(header.arch, cfg.seed)?;
    let mut branch = match &cfg.branch {
        Some(kind) => Some(Branch::<f32>::new(kind.clone(), cfg.latent_dim, 0)?),
        None => None,
    };
    let mut blocks = blocks.into_iter();
    let mut next = |name: &str, shape: &[usize]| -> Result<Tensor<f32>> {
        let t = blocks.next().ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
        if t.shape() != shape {
            return Err(corrupt(format!("tensor {name} has shape {:?}, expected {shape:?}", t.shape())));
        }
        Ok(t)
    };
    let mut fill = |name: &str, seq: &mut crate::nn::Sequential<f32>| -> Result<()> {
        for (i, l) in seq.layers.iter_mut().enumerate() {
            for p in l.params.iter_mut() {
                *p = next(&format!("{name}.{i}"), &p.shape().to_vec())?;
            }
        }
        Ok(())
    };
    fill("encoder", &mut model.encoder)?;
    fill("decoder", &mut model.decoder)?;
    if let Some(h) = branch.as_mut().and_then(|b| b.head.as_mut()) {
        fill("branch", h)?;
    }
    if let Some(b) = branch.as_mut() {
        b.centroids = header.centroids;
    }
    let shapes: Vec<Vec<usize>> = model
        .encoder
        .params()
        .chain(model.decoder.params())
        .chain(branch.iter().flat_map(|b| b.head.iter().flat_map(|h| h.params())))
        .map(|t| t.shape().to_vec())
        .collect();
    let mut adam = AdamState::new(cfg.adam, &shapes);
    adam.step = header.adam_step;
    for (i, m) in adam.m.iter_mut().enumerate() {
        *m = next(&format!("adam.m.{i}"), &shapes[i])?;
    }
    for (i, v) in adam.v.iter_mut().enumerate() {
        *v = next(&format!("adam.v.{i}"), &shapes[i])?;
    }
    if next("end", &[]).is_ok() {
        return Err(corrupt("more tensors than the model holds"));
    }
    let eps_rng = header.eps_rng.restore().ok_or_else(|| corrupt("bad RNG state"))?;
    Ok(Checkpoint {
        config: cfg,
        model,
        branch,
        adam,
        eps_rng,
        epoch: header.epoch,
        initial_eval: header.initial_eval,
        history: header.history,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| BvaeError::io(path, e))?;
    checkpoint_from_bytes(&bytes).map_err(|e| match e {
        BvaeError::Checkpoint(m) => BvaeError::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Spec-style aliases.
pub use load_checkpoint as checkpoint_load;
pub use save_checkpoint as checkpoint_save;
