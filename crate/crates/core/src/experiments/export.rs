//! Exporters: latent scatter CSV, decoder grid, confusion matrix and
//! single decoded samples. Images are binary 8-bit PGM (P5).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{BvaeError, Result};
use crate::tensor::Tensor;
use crate::train::Checkpoint;
use crate::vae::decoder_grid;
use crate::NUM_CLASSES;

use super::CODE_VERSION;

/// Latent extent of the decoder grid and of sampled points.
pub const GRID_RANGE: f64 = 3.0;
pub const GRID_STEPS: usize = 30;
/// Pixel size of one confusion-matrix cell in the rendered image.
const CELL: usize = 24;

/// Provenance written into every exported file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputMeta {
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub epoch: usize,
}

impl OutputMeta {
    pub fn of(ck: &Checkpoint) -> Self {
        Self {
            config_hash: ck.config.hash(),
            seed: ck.config.seed,
            code_version: CODE_VERSION.into(),
            epoch: ck.epoch,
        }
    }

    fn lines(&self) -> Vec<String> {
        vec![
            format!("config_hash={}", self.config_hash),
            format!("seed={}", self.seed),
            format!("code_version={}", self.code_version),
            format!("epoch={}", self.epoch),
        ]
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| BvaeError::io(dir, e))?;
    }
    let f = std::fs::File::create(path).map_err(|e| BvaeError::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

/// Writes a binary PGM with `#` comment lines in the header.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8], comments: &[String]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(BvaeError::dim("pgm", format!("{} pixels for {width}x{height}", pixels.len())));
    }
    let mut w = create(path)?;
    let io = |e| BvaeError::io(path, e);
    write!(w, "P5\n").map_err(io)?;
    for c in comments {
        writeln!(w, "# {c}").map_err(io)?;
    }
    write!(w, "{width} {height}\n255\n").map_err(io)?;
    w.write_all(pixels).map_err(io)?;
    w.flush().map_err(io)
}

/// Reads a binary 8-bit PGM, returning `(width, height, pixels, comments)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>, Vec<String>)> {
    let bytes = std::fs::read(path).map_err(|e| BvaeError::io(path, e))?;
    let bad = |d: &str| BvaeError::Format {
        path: path.into(),
        detail: d.into(),
    };
    let mut pos = 0;
    let mut comments = Vec::new();
    let mut fields = Vec::new();
    while fields.len() < 4 {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))? + pos;
        let line = std::str::from_utf8(&bytes[pos..end]).map_err(|_| bad("header is not text"))?;
        pos = end + 1;
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
        } else {
            fields.extend(line.split_whitespace().map(String::from));
        }
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("not an 8-bit binary PGM"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let pixels = bytes[pos..].to_vec();
    if pixels.len() != w * h {
        return Err(bad("pixel data length mismatch"));
    }
    Ok((w, h, pixels, comments))
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `z1,z2,label` per test sample from the latent means. For k > 2 the
/// first two dimensions are written (noted in the header); for k = 1 the
/// `z2` column is 0.
pub fn export_latent_scatter(ck: &Checkpoint, test: &LabeledDataset, path: &Path) -> Result<()> {
    let z = ck.encode_means(&test.images)?;
    let k = z.row_len();
    let mut w = create(path)?;
    let io = |e| BvaeError::io(path, e);
    for l in OutputMeta::of(ck).lines() {
        writeln!(w, "# {l}").map_err(io)?;
    }
    writeln!(w, "# latent_dim={k}").map_err(io)?;
    if k > 2 {
        writeln!(w, "# columns z1,z2 are the first two of {k} latent dimensions").map_err(io)?;
    }
    writeln!(w, "z1,z2,label").map_err(io)?;
    for r in 0..z.rows() {
        let row = z.row(r);
        let z2 = row.get(1).copied().unwrap_or(0.0);
        writeln!(w, "{},{},{}", row[0], z2, test.labels[r]).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Tiles the decoded 30×30 latent grid over [−3, 3]² into one image.
/// Rows run from z2 = +3 (top) to −3, columns from z1 = −3 (left) to +3.
pub fn export_decoder_grid(ck: &Checkpoint, path: &Path) -> Result<(usize, usize)> {
    let patches = decoder_grid(&ck.model, GRID_RANGE, GRID_STEPS)?;
    let [h, w, _] = ck.model.arch.image_shape();
    let (gw, gh) = (GRID_STEPS * w, GRID_STEPS * h);
    let mut px = vec![0u8; gw * gh];
    for i in 0..GRID_STEPS * GRID_STEPS {
        let (gr, gc) = (i / GRID_STEPS, i % GRID_STEPS);
        let patch = patches.row(i);
        for y in 0..h {
            for x in 0..w {
                px[(gr * h + y) * gw + gc * w + x] = to_u8(patch[y * w + x]);
            }
        }
    }
    let mut comments = OutputMeta::of(ck).lines();
    comments.push(format!(
        "grid {GRID_STEPS}x{GRID_STEPS} over [-{GRID_RANGE},{GRID_RANGE}]^2; top-left patch (z1,z2)=(-{GRID_RANGE},+{GRID_RANGE}); z1 grows rightward, z2 grows upward"
    ));
    write_pgm(path, gw, gh, &px, &comments)?;
    Ok((gw, gh))
}

/// Writes the confusion matrix as CSV (rows = true digit, columns =
/// predicted) and as a grey-level image scaled by the largest count.
pub fn export_confusion(
    confusion: &[[u64; NUM_CLASSES]; NUM_CLASSES],
    meta: &OutputMeta,
    csv_path: &Path,
    pgm_path: &Path,
) -> Result<()> {
    let mut w = create(csv_path)?;
    let io = |e| BvaeError::io(csv_path, e);
    for l in meta.lines() {
        writeln!(w, "# {l}").map_err(io)?;
    }
    let header: Vec<String> = (0..NUM_CLASSES).map(|c| format!("pred_{c}")).collect();
    writeln!(w, "true,{}", header.join(",")).map_err(io)?;
    for (t, row) in confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        writeln!(w, "{t},{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let max = confusion.iter().flatten().copied().max().unwrap_or(0).max(1) as f32;
    let side = NUM_CLASSES * CELL;
    let mut px = vec![0u8; side * side];
    for y in 0..side {
        for x in 0..side {
            px[y * side + x] = to_u8(confusion[y / CELL][x / CELL] as f32 / max);
        }
    }
    let mut comments = meta.lines();
    comments.push(format!("confusion matrix, {CELL}px cells, rows true digit, columns predicted, white = {max}"));
    write_pgm(pgm_path, side, side, &px, &comments)
}

/// Decodes one latent point into an image.
pub fn export_sampled_reconstruction(ck: &Checkpoint, z: &[f64], path: &Path) -> Result<()> {
    let k = ck.model.latent_dim();
    if z.len() != k {
        return Err(BvaeError::Config(format!("point has {} coordinates, latent space has {k}", z.len())));
    }
    if let Some(v) = z.iter().find(|v| !v.is_finite() || v.abs() > GRID_RANGE) {
        return Err(BvaeError::Config(format!("coordinate {v} outside [-{GRID_RANGE}, {GRID_RANGE}]")));
    }
    let zt = Tensor::from_vec(&[1, k], z.iter().map(|&v| v as f32).collect())?;
    let img = ck.model.decode(&zt)?;
    let [h, w, _] = ck.model.arch.image_shape();
    let px: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    let mut comments = OutputMeta::of(ck).lines();
    let zs: Vec<String> = z.iter().map(f64::to_string).collect();
    comments.push(format!("z=({})", zs.join(",")));
    write_pgm(path, w, h, &px, &comments)
}
