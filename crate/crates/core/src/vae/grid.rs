//! Decoding of an equidistant grid over a 2-D latent space.

use crate::error::{BvaeError, Result};
use crate::tensor::{Scalar, Tensor};

use super::VaeModel;

/// Coordinates of `steps` equidistant points on `[-range, range]`.
pub fn grid_axis(range: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![0.0];
    }
    (0..steps)
        .map(|i| -range + 2.0 * range * i as f64 / (steps - 1) as f64)
        .collect()
}

/// Latent points in row-major grid order. Row `r` holds `z2 = axis[steps-1-r]`
/// and column `c` holds `z1 = axis[c]`, so the top-left point is
/// `(-range, +range)` as in a standard plot with z2 increasing upwards.
pub fn grid_points(range: f64, steps: usize) -> Vec<[f64; 2]> {
    let axis = grid_axis(range, steps);
    let mut pts = Vec::with_capacity(steps * steps);
    for r in 0..steps {
        for c in 0..steps {
            pts.push([axis[c], axis[steps - 1 - r]]);
        }
    }
    pts
}

/// Decodes a `steps × steps` grid; returns `[steps², H, W, 1]`.
pub fn decoder_grid<T: Scalar>(model: &VaeModel<T>, range: f64, steps: usize) -> Result<Tensor<T>> {
    if model.latent_dim() != 2 {
        return Err(BvaeError::Config(format!(
            "decoder grid needs a 2-D latent space, model has {}",
            model.latent_dim()
        )));
    }
    if steps == 0 {
        return Err(BvaeError::Config("decoder grid needs at least one step".into()));
    }
    let pts = grid_points(range, steps);
    let z = Tensor::from_vec(
        &[pts.len(), 2],
        pts.iter().flat_map(|p| [T::lit(p[0]), T::lit(p[1])]).collect(),
    )?;
    let mut out = Tensor::zeros(&[pts.len(), model.arch.height, model.arch.width, 1]);
    let per = out.row_len();
    for start in (0..pts.len()).step_by(128) {
        let end = (start + 128).min(pts.len());
        let x = model.decode(&z.slice_rows(start, end))?;
        out.data_mut()[start * per..end * per].copy_from_slice(x.data());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::{OutputActivation, VaeArch};

    #[test]
    fn axis_step_and_endpoints() {
        let a = grid_axis(3.0, 30);
        assert_eq!(a.len(), 30);
        assert_eq!(a[0], -3.0);
        assert_eq!(a[29], 3.0);
        assert!((a[1] - a[0] - 6.0 / 29.0).abs() < 1e-12);
    }

    #[test]
    fn top_left_is_minus_plus() {
        let p = grid_points(3.0, 30);
        assert_eq!(p.len(), 900);
        assert_eq!(p[0], [-3.0, 3.0]);
        assert_eq!(p[899], [3.0, -3.0]);
    }

    #[test]
    fn grid_requires_two_dims() {
        let m = VaeModel::<f32>::new(VaeArch::mnist(3, OutputActivation::Sigmoid), 0).unwrap();
        assert!(matches!(decoder_grid(&m, 3.0, 30), Err(BvaeError::Config(_))));
    }

    #[test]
    fn grid_decodes_900_sigmoid_patches() {
        let m = VaeModel::<f32>::new(VaeArch::mnist(2, OutputActivation::Sigmoid), 0).unwrap();
        let g = decoder_grid(&m, 3.0, 30).unwrap();
        assert_eq!(g.shape(), &[900, 28, 28, 1]);
        assert!(g.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
