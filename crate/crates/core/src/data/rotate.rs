//! Rotation augmentation with bilinear resampling.

use std::f64::consts::TAU;

use rand::Rng as _;

use super::LabeledDataset;
use crate::rng::Rng;
use crate::tensor::Tensor;
use rand::SeedableRng;

/// Snap distance below which a source coordinate is treated as integral, so
/// quarter turns map the pixel grid onto itself exactly.
const SNAP: f64 = 1e-9;

fn rotate_plane(src: &[f32], h: usize, w: usize, angle: f64, dst: &mut [f32]) {
    if angle == 0.0 {
        dst.copy_from_slice(src);
        return;
    }
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (s, c) = angle.sin_cos();
    let snap = |v: f64| {
        let r = v.round();
        if (v - r).abs() < SNAP {
            r
        } else {
            v
        }
    };
    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            src[y as usize * w + x as usize] as f64
        }
    };
    for oy in 0..h {
        for ox in 0..w {
            let dy = oy as f64 - cy;
            let dx = ox as f64 - cx;
            // inverse map: rotate the output coordinate by -angle
            let sx = snap(cx + c * dx + s * dy);
            let sy = snap(cy - s * dx + c * dy);
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = if fx == 0.0 && fy == 0.0 {
                at(y0, x0)
            } else {
                (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
                    + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1))
            };
            dst[oy * w + ox] = (v as f32).clamp(0.0, 1.0);
        }
    }
}

/// Rotates a single-channel image (`[H, W]` or `[H, W, 1]`) about its
/// centre. Samples falling outside the source read as 0.
pub fn rotate_image(img: &Tensor<f32>, angle: f64) -> Tensor<f32> {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let mut out = Tensor::zeros(img.shape());
    rotate_plane(img.data(), h, w, angle, out.data_mut());
    out
}

/// Per-sample angles, uniform on `[0, 2π)`, drawn in sample order.
pub fn rotation_angles(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.0..TAU)).collect()
}

/// Rotates every image by its own fixed random angle; labels are kept.
pub fn make_rotated_dataset(ds: &LabeledDataset, seed: u64) -> LabeledDataset {
    let [n, h, w, _] = ds.dims();
    let angles = rotation_angles(n, seed);
    let mut images = Tensor::zeros(ds.images.shape());
    let plane = h * w;
    for (i, &a) in angles.iter().enumerate() {
        let (src, dst) = (ds.images.row(i), &mut images.data_mut()[i * plane..(i + 1) * plane]);
        rotate_plane(src, h, w, a, dst);
    }
    LabeledDataset {
        images,
        labels: ds.labels.clone(),
        split: ds.split,
        rotation_seed: Some(seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ramp() -> Tensor<f32> {
        Tensor::from_vec(
            &[28, 28],
            (0..784).map(|i| ((i * 37) % 255) as f32 / 255.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_angle_is_bitwise_identity() {
        let img = ramp();
        assert_eq!(rotate_image(&img, 0.0), img);
    }

    #[test]
    fn half_turn_is_double_flip() {
        let img = ramp();
        let r = rotate_image(&img, PI);
        for y in 0..28 {
            for x in 0..28 {
                assert_eq!(r.data()[y * 28 + x], img.data()[(27 - y) * 28 + (27 - x)]);
            }
        }
    }

    #[test]
    fn quarter_turns_are_permutations() {
        let img = ramp();
        let r = rotate_image(&img, FRAC_PI_2);
        let mut a: Vec<u32> = img.data().iter().map(|v| v.to_bits()).collect();
        let mut b: Vec<u32> = r.data().iter().map(|v| v.to_bits()).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        let four = (0..4).fold(img.clone(), |acc, _| rotate_image(&acc, FRAC_PI_2));
        assert_eq!(four, img);
    }

    #[test]
    fn constant_interior_unchanged() {
        let img = Tensor::full(&[28, 28], 0.6f32);
        let r = rotate_image(&img, 0.7);
        // pixels within radius 12 of the centre sample fully inside the image
        for y in 0..28 {
            for x in 0..28 {
                let d = ((y as f64 - 13.5).powi(2) + (x as f64 - 13.5).powi(2)).sqrt();
                if d < 12.0 {
                    assert!((r.data()[y * 28 + x] - 0.6).abs() < 1e-6);
                }
            }
        }
    }
}
