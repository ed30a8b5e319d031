//! IDX binary files (big-endian header, raw `u8` payload), optionally gzip
//! compressed.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::{LabeledDataset, Split};
use crate::error::{BvaeError, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads a file, transparently inflating it when it starts with the gzip
/// signature `1f 8b`.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| BvaeError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| BvaeError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| truncated(path, "header"))
}

fn truncated(path: &Path, what: &str) -> BvaeError {
    BvaeError::io(
        path,
        std::io::Error::new(std::io::ErrorKind::UnexpectedEof, format!("truncated IDX {what}")),
    )
}

/// Parsed IDX payload: dimensions and raw bytes.
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub bytes: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8], expected_magic: u32, path: &Path) -> Result<IdxArray> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != expected_magic {
        return Err(BvaeError::Format {
            path: path.to_path_buf(),
            detail: format!("magic {magic:#010x}, expected {expected_magic:#010x}"),
        });
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|i| be_u32(bytes, 4 + 4 * i, path).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndim;
    let len: usize = dims.iter().product();
    let payload = bytes
        .get(start..start + len)
        .ok_or_else(|| truncated(path, "payload"))?;
    Ok(IdxArray {
        dims,
        bytes: payload.to_vec(),
    })
}

/// Loads an image/label file pair, scaling pixels by 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<LabeledDataset> {
    let images = parse_idx(&read_maybe_gzip(images_path)?, IMAGES_MAGIC, images_path)?;
    let labels = parse_idx(&read_maybe_gzip(labels_path)?, LABELS_MAGIC, labels_path)?;
    let (n, h, w) = match images.dims[..] {
        [n, h, w] => (n, h, w),
        _ => unreachable!("image magic fixes three dimensions"),
    };
    if labels.dims[0] != n {
        return Err(BvaeError::Consistency(format!(
            "{} holds {n} images but {} holds {} labels",
            images_path.display(),
            labels_path.display(),
            labels.dims[0]
        )));
    }
    if let Some(bad) = labels.bytes.iter().find(|&&l| l > 9) {
        return Err(BvaeError::Format {
            path: labels_path.to_path_buf(),
            detail: format!("label {bad} outside 0..9"),
        });
    }
    let pixels = images.bytes.iter().map(|&b| b as f32 / 255.0).collect();
    Ok(LabeledDataset {
        images: Tensor::from_vec(&[n, h, w, 1], pixels)?,
        labels: labels.bytes,
        split,
        rotation_seed: None,
    })
}

/// Writes a dataset back to an uncompressed IDX pair (pixels rounded to
/// the nearest byte).
pub fn write_idx(ds: &LabeledDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let [n, h, w, _] = ds.dims();
    let mut img = Vec::with_capacity(16 + ds.images.len());
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [n, h, w] {
        img.extend_from_slice(&(d as u32).to_be_bytes());
    }
    img.extend(ds.images.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    let mut lab = Vec::with_capacity(8 + n);
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    lab.extend_from_slice(&ds.labels);
    write_file(images_path, &img)?;
    write_file(labels_path, &lab)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| BvaeError::io(path, e))?;
    f.write_all(bytes).map_err(|e| BvaeError::io(path, e))
}

/// Standard MNIST file names and SHA-256 digests of their uncompressed
/// contents.
pub const MNIST_FILES: [(&str, &str); 4] = [
    (
        "train-images-idx3-ubyte",
        "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    ),
    (
        "train-labels-idx1-ubyte",
        "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    ),
    (
        "t10k-images-idx3-ubyte",
        "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    ),
    (
        "t10k-labels-idx1-ubyte",
        "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
    ),
];

/// Locates `<name>` or `<name>.gz` under `dir`.
pub fn locate(dir: &Path, name: &str) -> Option<PathBuf> {
    [name.to_string(), format!("{name}.gz")]
        .into_iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
}

/// Checks that all four MNIST files exist and match their known digests.
pub fn verify_mnist(dir: &Path) -> Result<()> {
    use sha2::{Digest, Sha256};
    for (name, digest) in MNIST_FILES {
        let path = locate(dir, name).ok_or_else(|| {
            BvaeError::MissingData(format!(
                "{name}[.gz] not found in {}; set BVAE_DATA_DIR to the directory holding the four MNIST IDX files ({})",
                dir.display(),
                MNIST_FILES.map(|f| f.0).join(", ")
            ))
        })?;
        let got = hex::encode(Sha256::digest(read_maybe_gzip(&path)?));
        if got != digest {
            return Err(BvaeError::MissingData(format!(
                "checksum mismatch for {}: {got}",
                path.display()
            )));
        }
    }
    Ok(())
}

/// Loads one MNIST split from `dir` (no checksum verification).
pub fn load_mnist_split(dir: &Path, split: Split) -> Result<LabeledDataset> {
    let (img, lab) = match split {
        Split::Train => (MNIST_FILES[0].0, MNIST_FILES[1].0),
        Split::Test => (MNIST_FILES[2].0, MNIST_FILES[3].0),
    };
    let missing = |n: &str| BvaeError::MissingData(format!("{n}[.gz] not found in {}", dir.display()));
    let ip = locate(dir, img).ok_or_else(|| missing(img))?;
    let lp = locate(dir, lab).ok_or_else(|| missing(lab))?;
    load_idx(&ip, &lp, split)
}
