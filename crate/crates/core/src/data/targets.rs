//! Fixed per-class output images for the fixed-output VAE variant.
//!
//! Synthetic targets place class `d` at a centre on a circle of radius 9
//! around the image centre, at angle `2π d / 10`, rounded to the nearest
//! pixel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{BvaeError, Result};
use crate::tensor::Tensor;
use crate::NUM_CLASSES;

pub const GAUSSIAN_SIGMA: f64 = 2.0;
pub const SQUARE_SIDE: usize = 6;
pub const WAVELET_SIDE: usize = 12;
pub const CENTER_RADIUS: f64 = 9.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// The first training image of each class.
    Exemplar,
    Gaussian,
    Square,
    Wavelet,
}

impl TargetKind {
    pub const ALL: [TargetKind; 4] = [
        TargetKind::Exemplar,
        TargetKind::Gaussian,
        TargetKind::Square,
        TargetKind::Wavelet,
    ];

    /// Synthetic targets are trained with a ReLU output and squared error.
    pub fn is_synthetic(self) -> bool {
        !matches!(self, TargetKind::Exemplar)
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Exemplar => "exemplar",
            TargetKind::Gaussian => "gaussian",
            TargetKind::Square => "square",
            TargetKind::Wavelet => "wavelet",
        }
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetKind {
    type Err = BvaeError;
    fn from_str(s: &str) -> Result<Self> {
        TargetKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| BvaeError::Config(format!("unknown target kind {s:?}")))
    }
}

/// Ten target images, index = class id, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSet {
    pub kind: TargetKind,
    pub targets: Tensor<f32>,
    pub value_range: (f32, f32),
}

impl TargetSet {
    pub fn target(&self, class: u8) -> &[f32] {
        self.targets.row(class as usize)
    }
}

/// Integer pixel `(row, col)` centre of class `d`.
pub fn class_center(d: usize, h: usize, w: usize) -> (usize, usize) {
    let theta = std::f64::consts::TAU * d as f64 / NUM_CLASSES as f64;
    let cy = (h as f64 - 1.0) / 2.0 + CENTER_RADIUS * theta.sin();
    let cx = (w as f64 - 1.0) / 2.0 + CENTER_RADIUS * theta.cos();
    (cy.round() as usize, cx.round() as usize)
}

fn synth(h: usize, w: usize, f: impl Fn(usize, i64, i64) -> f32) -> Tensor<f32> {
    let mut t = Tensor::zeros(&[NUM_CLASSES, h, w, 1]);
    for d in 0..NUM_CLASSES {
        let (cy, cx) = class_center(d, h, w);
        let row = t.row_mut(d);
        for y in 0..h {
            for x in 0..w {
                row[y * w + x] = f(d, y as i64 - cy as i64, x as i64 - cx as i64);
            }
        }
    }
    t
}

/// Builds the target set of `kind`. Every kind is a deterministic function
/// of the training split; `_seed` is accepted for interface stability.
pub fn make_target_set(kind: TargetKind, train: &LabeledDataset, _seed: u64) -> Result<TargetSet> {
    let [_, h, w, _] = train.dims();
    let targets = match kind {
        TargetKind::Exemplar => {
            let idx = (0..NUM_CLASSES as u8)
                .map(|d| {
                    train.labels.iter().position(|&l| l == d).ok_or_else(|| {
                        BvaeError::Consistency(format!("training split has no digit {d}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            train.images.gather_rows(&idx)
        }
        TargetKind::Gaussian => synth(h, w, |_, dy, dx| {
            (-((dy * dy + dx * dx) as f64) / (2.0 * GAUSSIAN_SIGMA * GAUSSIAN_SIGMA)).exp() as f32
        }),
        TargetKind::Square => {
            let half = (SQUARE_SIDE / 2) as i64;
            synth(h, w, |_, dy, dx| {
                if (-half..half).contains(&dy) && (-half..half).contains(&dx) {
                    1.0
                } else {
                    0.0
                }
            })
        }
        TargetKind::Wavelet => {
            let half = (WAVELET_SIDE / 2) as i64;
            synth(h, w, |_, dy, dx| {
                if !((-half..half).contains(&dy) && (-half..half).contains(&dx)) {
                    return 0.0;
                }
                // separable Haar: +1 on the first half of each axis, -1 on the second
                let hy = if dy < 0 { 1.0 } else { -1.0 };
                let hx = if dx < 0 { 1.0 } else { -1.0 };
                0.5 + 0.5 * hy * hx
            })
        }
    };
    let lo = targets.data().iter().copied().fold(f32::INFINITY, f32::min);
    let hi = targets.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
    Ok(TargetSet {
        kind,
        targets,
        value_range: (lo, hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    fn toy_train() -> LabeledDataset {
        let n = 25;
        let mut imgs = Tensor::zeros(&[n, 28, 28, 1]);
        let labels: Vec<u8> = (0..n).map(|i| ((i * 7) % 10) as u8).collect();
        for i in 0..n {
            imgs.row_mut(i).fill(i as f32 / n as f32);
        }
        LabeledDataset::new(imgs, labels, Split::Train).unwrap()
    }

    #[test]
    fn exemplars_are_first_occurrences() {
        let train = toy_train();
        let set = make_target_set(TargetKind::Exemplar, &train, 0).unwrap();
        for d in 0..10u8 {
            let first = train.labels.iter().position(|&l| l == d).unwrap();
            assert_eq!(set.target(d), train.images.row(first));
        }
    }

    #[test]
    fn gaussian_peaks_at_class_center() {
        let set = make_target_set(TargetKind::Gaussian, &toy_train(), 0).unwrap();
        for d in 0..10 {
            let (cy, cx) = class_center(d, 28, 28);
            let row = set.target(d as u8);
            let max = row.iter().copied().fold(0.0f32, f32::max);
            assert_eq!(max, 1.0);
            assert_eq!(row[cy * 28 + cx], 1.0);
        }
    }

    #[test]
    fn all_kinds_within_unit_interval() {
        let train = toy_train();
        for kind in TargetKind::ALL {
            let set = make_target_set(kind, &train, 0).unwrap();
            assert_eq!(set.targets.shape(), &[10, 28, 28, 1]);
            assert!(set.targets.data().iter().all(|v| (0.0..=1.0).contains(v)), "{kind}");
        }
    }

    #[test]
    fn centers_distinct_and_inside() {
        let c: Vec<_> = (0..10).map(|d| class_center(d, 28, 28)).collect();
        for i in 0..10 {
            assert!(c[i].0 < 28 && c[i].1 < 28);
            for j in 0..i {
                assert_ne!(c[i], c[j]);
            }
        }
    }

    #[test]
    fn unknown_kind_is_config_error() {
        assert!(matches!("blob".parse::<TargetKind>(), Err(BvaeError::Config(_))));
        assert_eq!("wavelet".parse::<TargetKind>().unwrap(), TargetKind::Wavelet);
    }
}
