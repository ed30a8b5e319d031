//! Small labelled image sets for tests and offline smoke runs.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{DataBundle, LabeledDataset, Split};
use crate::error::Result;
use crate::rng;
use crate::tensor::Tensor;

/// Blob centre of each class on a 3-4-3 layout in the unit square.
fn class_centre(c: u8) -> (f32, f32) {
    const C: [(f32, f32); 10] = [
        (0.25, 0.2),
        (0.5, 0.2),
        (0.75, 0.2),
        (0.2, 0.5),
        (0.4, 0.5),
        (0.6, 0.5),
        (0.8, 0.5),
        (0.25, 0.8),
        (0.5, 0.8),
        (0.75, 0.8),
    ];
    C[c as usize]
}

/// `n` images of `h × w`: a Gaussian blob at a class-specific position,
/// jittered, plus clipped pixel noise. Labels cycle through 0..=9.
pub fn blob_dataset(n: usize, h: usize, w: usize, seed: u64, split: Split) -> Result<LabeledDataset> {
    let mut r = rng::stream(seed, "synthetic", split as u64);
    let noise = Normal::new(0.0f32, 0.05).expect("valid sigma");
    let jitter = Normal::new(0.0f32, 0.03).expect("valid sigma");
    let mut data = Vec::with_capacity(n * h * w);
    let mut labels = Vec::with_capacity(n);
    let s = 0.12f32;
    for i in 0..n {
        let c = (i % 10) as u8;
        let (cx, cy) = class_centre(c);
        let (cx, cy) = (cx + jitter.sample(&mut r), cy + jitter.sample(&mut r));
        let amp = r.random_range(0.7f32..1.0);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = ((x as f32 + 0.5) / w as f32, (y as f32 + 0.5) / h as f32);
                let d2 = (u - cx).powi(2) + (v - cy).powi(2);
                let p = amp * (-d2 / (2.0 * s * s)).exp() + noise.sample(&mut r);
                data.push(p.clamp(0.0, 1.0));
            }
        }
        labels.push(c);
    }
    LabeledDataset::new(Tensor::from_vec(&[n, h, w, 1], data)?, labels, split)
}

/// 28×28 train/test bundle of blob images.
pub fn blob_bundle(n_train: usize, n_test: usize, seed: u64) -> Result<DataBundle> {
    Ok(DataBundle {
        train: blob_dataset(n_train, 28, 28, seed, Split::Train)?,
        test: blob_dataset(n_test, 28, 28, seed, Split::Test)?,
    })
}
