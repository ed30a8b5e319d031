//! Dataset cache: raw little-endian `f32` pixels plus a JSON sidecar.
//!
//! `<stem>.f32` holds `N*H*W*C` values in row-major NHWC order with no
//! header. `<stem>.json` holds [`CacheHeader`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LabeledDataset, Split};
use crate::error::{BvaeError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub shape: Vec<usize>,
    pub labels: Vec<u8>,
    pub split: Split,
    /// `"mnist"` or `"mnist_rotated"`.
    pub kind: String,
    pub seed: Option<u64>,
    /// SHA-256 of the `.f32` payload.
    pub sha256: String,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("f32"), stem.with_extension("json"))
}

pub fn save_cache(ds: &LabeledDataset, stem: &Path) -> Result<()> {
    let (bin, json) = paths(stem);
    let bytes: Vec<u8> = ds.images.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    let header = CacheHeader {
        shape: ds.images.shape().to_vec(),
        labels: ds.labels.clone(),
        split: ds.split,
        kind: if ds.rotation_seed.is_some() { "mnist_rotated" } else { "mnist" }.into(),
        seed: ds.rotation_seed,
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    fs::write(&bin, &bytes).map_err(|e| BvaeError::io(&bin, e))?;
    fs::write(&json, serde_json::to_vec(&header)?).map_err(|e| BvaeError::io(&json, e))
}

pub fn load_cache(stem: &Path) -> Result<LabeledDataset> {
    let (bin, json) = paths(stem);
    let header: CacheHeader =
        serde_json::from_slice(&fs::read(&json).map_err(|e| BvaeError::io(&json, e))?)?;
    let bytes = fs::read(&bin).map_err(|e| BvaeError::io(&bin, e))?;
    if hex::encode(Sha256::digest(&bytes)) != header.sha256 {
        return Err(BvaeError::Format {
            path: bin,
            detail: "payload checksum mismatch".into(),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let mut ds = LabeledDataset::new(Tensor::from_vec(&header.shape, data)?, header.labels, header.split)?;
    ds.rotation_seed = header.seed;
    Ok(ds)
}
