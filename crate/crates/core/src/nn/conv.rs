//! 2-D convolution and transposed convolution on NHWC tensors.
//!
//! Kernels are stored `[k, k, C, F]`: a convolution maps `C` input channels
//! to `F` filters, and the transposed convolution with the same kernel maps
//! `F` channels back to `C`. Padding is always "same": the output extent is
//! `ceil(in / stride)` and any odd total padding goes to the bottom/right.
//!
//! Both directions run through patch expansion (im2col / col2im) and a GEMM,
//! processed a few images at a time so the patch buffer stays cache sized.

use serde::{Deserialize, Serialize};

use crate::error::{BvaeError, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

/// Target patch-buffer size in elements per chunk.
const CHUNK_ELEMS: usize = 1 << 18;

/// Geometry of a "same"-padded convolution from `in_*` to `out_*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    pub fn same(
        in_h: usize,
        in_w: usize,
        in_c: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        if kernel == 0 || stride == 0 || in_h == 0 || in_w == 0 || in_c == 0 || filters == 0 {
            return Err(BvaeError::dim(
                "conv geometry",
                format!("degenerate geometry in {in_h}x{in_w}x{in_c}, filters {filters}, kernel {kernel}, stride {stride}"),
            ));
        }
        let out_h = in_h.div_ceil(stride);
        let out_w = in_w.div_ceil(stride);
        let pad_h = ((out_h - 1) * stride + kernel).saturating_sub(in_h);
        let pad_w = ((out_w - 1) * stride + kernel).saturating_sub(in_w);
        Ok(Self {
            in_h,
            in_w,
            in_c,
            out_h,
            out_w,
            filters,
            kernel,
            stride,
            pad_top: pad_h / 2,
            pad_left: pad_w / 2,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    fn images_per_chunk(&self) -> usize {
        (CHUNK_ELEMS / (self.out_pixels() * self.patch_len()).max(1)).max(1)
    }

    /// Source pixel for output `(oy, ox)` and kernel tap `(ky, kx)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad_top)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad_left)?;
        (y < self.in_h && x < self.in_w).then_some((y, x))
    }
}

/// Expand `nimg` images into `cols[(img, oy, ox), (ky, kx, c)]`.
fn im2col<T: Scalar>(geo: &ConvGeometry, input: &[T], nimg: usize, cols: &mut [T]) {
    let plen = geo.patch_len();
    let c = geo.in_c;
    let mut row = 0;
    for img in 0..nimg {
        let base = img * geo.in_len();
        for oy in 0..geo.out_h {
            for ox in 0..geo.out_w {
                let dst = &mut cols[row * plen..(row + 1) * plen];
                for ky in 0..geo.kernel {
                    for kx in 0..geo.kernel {
                        let off = (ky * geo.kernel + kx) * c;
                        let d = &mut dst[off..off + c];
                        match geo.source(oy, ox, ky, kx) {
                            Some((y, x)) => {
                                let s = base + (y * geo.in_w + x) * c;
                                d.copy_from_slice(&input[s..s + c]);
                            }
                            None => d.fill(T::zero()),
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-add patch rows back onto `nimg` images (adjoint of `im2col`).
fn col2im_add<T: Scalar>(geo: &ConvGeometry, cols: &[T], nimg: usize, out: &mut [T]) {
    let plen = geo.patch_len();
    let c = geo.in_c;
    let mut row = 0;
    for img in 0..nimg {
        let base = img * geo.in_len();
        for oy in 0..geo.out_h {
            for ox in 0..geo.out_w {
                let src = &cols[row * plen..(row + 1) * plen];
                for ky in 0..geo.kernel {
                    for kx in 0..geo.kernel {
                        if let Some((y, x)) = geo.source(oy, ox, ky, kx) {
                            let off = (ky * geo.kernel + kx) * c;
                            let d = base + (y * geo.in_w + x) * c;
                            for (o, &v) in out[d..d + c].iter_mut().zip(&src[off..off + c]) {
                                *o += v;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn check_kernel<T: Scalar>(context: &str, kernels: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let ks = kernels.shape();
    if ks.len() != 4 || ks[0] != ks[1] {
        return Err(BvaeError::dim(
            context,
            format!("kernel must be [k, k, C, F], got {ks:?}"),
        ));
    }
    Ok((ks[0], ks[2], ks[3]))
}

fn check_nhwc<T: Scalar>(context: &str, x: &Tensor<T>) -> Result<[usize; 4]> {
    match *x.shape() {
        [b, h, w, c] => Ok([b, h, w, c]),
        ref s => Err(BvaeError::dim(
            context,
            format!("expected NHWC input, got {s:?}"),
        )),
    }
}

/// Geometry for a forward convolution of `x` with `kernels`.
pub fn conv2d_geometry<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
) -> Result<ConvGeometry> {
    let [_, h, w, c] = check_nhwc("conv2d", x)?;
    let (k, kc, f) = check_kernel("conv2d", kernels)?;
    if kc != c {
        return Err(BvaeError::dim(
            "conv2d",
            format!("input has {c} channels but kernel expects {kc}"),
        ));
    }
    ConvGeometry::same(h, w, c, f, k, stride)
}

/// Geometry of the convolution whose adjoint maps `y` to the transposed
/// output (`[B, H*s, W*s, C]` for kernel `[k, k, C, F]`).
pub fn conv2d_transpose_geometry<T: Scalar>(
    y: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
) -> Result<ConvGeometry> {
    let [_, h, w, f] = check_nhwc("conv2d_transpose", y)?;
    let (k, c, kf) = check_kernel("conv2d_transpose", kernels)?;
    if kf != f {
        return Err(BvaeError::dim(
            "conv2d_transpose",
            format!("input has {f} channels but kernel emits {kf} filters in the adjoint conv"),
        ));
    }
    if stride == 0 {
        return Err(BvaeError::dim("conv2d_transpose", "stride must be positive"));
    }
    let geo = ConvGeometry::same(h * stride, w * stride, c, f, k, stride)?;
    if geo.out_h != h || geo.out_w != w {
        return Err(BvaeError::dim(
            "conv2d_transpose",
            "geometry is not the adjoint of a valid convolution",
        ));
    }
    Ok(geo)
}

/// Cross-correlation with "same" padding: `[B,H,W,C] -> [B,ceil(H/s),ceil(W/s),F]`.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let geo = conv2d_geometry(x, kernels, stride)?;
    let b = x.rows();
    let mut out = Tensor::zeros(&[b, geo.out_h, geo.out_w, geo.filters]);
    let per = geo.images_per_chunk();
    let plen = geo.patch_len();
    let mut cols = vec![T::zero(); per * geo.out_pixels() * plen];
    let out_img = geo.out_pixels() * geo.filters;
    let mut start = 0;
    while start < b {
        let n = per.min(b - start);
        let rows = n * geo.out_pixels();
        im2col(&geo, &x.data()[start * geo.in_len()..], n, &mut cols);
        gemm(
            MatRef::new(&cols, rows, plen),
            MatRef::new(kernels.data(), plen, geo.filters),
            T::zero(),
            &mut out.data_mut()[start * out_img..(start + n) * out_img],
        );
        start += n;
    }
    Ok(out)
}

/// Gradients of `conv2d_forward` w.r.t. its input and kernels.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let geo = conv2d_geometry(x, kernels, stride)?;
    let b = x.rows();
    if grad_out.shape() != [b, geo.out_h, geo.out_w, geo.filters] {
        return Err(BvaeError::dim(
            "conv2d backward",
            format!("grad_output shape {:?} does not match forward output", grad_out.shape()),
        ));
    }
    let mut grad_x = Tensor::zeros(x.shape());
    let mut grad_k = Tensor::zeros(kernels.shape());
    let per = geo.images_per_chunk();
    let plen = geo.patch_len();
    let mut cols = vec![T::zero(); per * geo.out_pixels() * plen];
    let out_img = geo.out_pixels() * geo.filters;
    let mut start = 0;
    while start < b {
        let n = per.min(b - start);
        let rows = n * geo.out_pixels();
        let g = &grad_out.data()[start * out_img..(start + n) * out_img];
        im2col(&geo, &x.data()[start * geo.in_len()..], n, &mut cols);
        gemm(
            MatRef::new(&cols, rows, plen).t(),
            MatRef::new(g, rows, geo.filters),
            T::one(),
            grad_k.data_mut(),
        );
        gemm(
            MatRef::new(g, rows, geo.filters),
            MatRef::new(kernels.data(), plen, geo.filters).t(),
            T::zero(),
            &mut cols[..rows * plen],
        );
        col2im_add(
            &geo,
            &cols,
            n,
            &mut grad_x.data_mut()[start * geo.in_len()..(start + n) * geo.in_len()],
        );
        start += n;
    }
    Ok((grad_x, grad_k))
}

/// Adjoint of `conv2d_forward`: `[B,H,W,F] -> [B,H*s,W*s,C]` for kernel `[k,k,C,F]`.
pub fn conv2d_transpose_forward<T: Scalar>(
    y: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let geo = conv2d_transpose_geometry(y, kernels, stride)?;
    let b = y.rows();
    let mut out = Tensor::zeros(&[b, geo.in_h, geo.in_w, geo.in_c]);
    let per = geo.images_per_chunk();
    let plen = geo.patch_len();
    let mut cols = vec![T::zero(); per * geo.out_pixels() * plen];
    let y_img = geo.out_pixels() * geo.filters;
    let mut start = 0;
    while start < b {
        let n = per.min(b - start);
        let rows = n * geo.out_pixels();
        gemm(
            MatRef::new(&y.data()[start * y_img..(start + n) * y_img], rows, geo.filters),
            MatRef::new(kernels.data(), plen, geo.filters).t(),
            T::zero(),
            &mut cols[..rows * plen],
        );
        col2im_add(
            &geo,
            &cols,
            n,
            &mut out.data_mut()[start * geo.in_len()..(start + n) * geo.in_len()],
        );
        start += n;
    }
    Ok(out)
}

/// Gradients of `conv2d_transpose_forward` w.r.t. its input and kernels.
pub fn conv2d_transpose_backward<T: Scalar>(
    y: &Tensor<T>,
    kernels: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let geo = conv2d_transpose_geometry(y, kernels, stride)?;
    let b = y.rows();
    if grad_out.shape() != [b, geo.in_h, geo.in_w, geo.in_c] {
        return Err(BvaeError::dim(
            "conv2d_transpose backward",
            format!("grad_output shape {:?} does not match forward output", grad_out.shape()),
        ));
    }
    let mut grad_y = Tensor::zeros(y.shape());
    let mut grad_k = Tensor::zeros(kernels.shape());
    let per = geo.images_per_chunk();
    let plen = geo.patch_len();
    let mut cols = vec![T::zero(); per * geo.out_pixels() * plen];
    let y_img = geo.out_pixels() * geo.filters;
    let mut start = 0;
    while start < b {
        let n = per.min(b - start);
        let rows = n * geo.out_pixels();
        im2col(&geo, &grad_out.data()[start * geo.in_len()..], n, &mut cols);
        gemm(
            MatRef::new(&cols, rows, plen),
            MatRef::new(kernels.data(), plen, geo.filters),
            T::zero(),
            &mut grad_y.data_mut()[start * y_img..(start + n) * y_img],
        );
        gemm(
            MatRef::new(&cols, rows, plen).t(),
            MatRef::new(&y.data()[start * y_img..(start + n) * y_img], rows, geo.filters),
            T::one(),
            grad_k.data_mut(),
        );
        start += n;
    }
    Ok((grad_y, grad_k))
}

/// Direct nested-loop convolution used as a reference in tests.
pub fn conv2d_naive<T: Scalar>(x: &Tensor<T>, kernels: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    let geo = conv2d_geometry(x, kernels, stride)?;
    let b = x.rows();
    let mut out = Tensor::zeros(&[b, geo.out_h, geo.out_w, geo.filters]);
    let k = geo.kernel;
    for img in 0..b {
        for oy in 0..geo.out_h {
            for ox in 0..geo.out_w {
                for f in 0..geo.filters {
                    let mut acc = T::zero();
                    for ky in 0..k {
                        for kx in 0..k {
                            let y = (oy * stride + ky) as isize - geo.pad_top as isize;
                            let xx = (ox * stride + kx) as isize - geo.pad_left as isize;
                            if y < 0 || xx < 0 || y >= geo.in_h as isize || xx >= geo.in_w as isize {
                                continue;
                            }
                            for c in 0..geo.in_c {
                                let xi = ((img * geo.in_h + y as usize) * geo.in_w + xx as usize) * geo.in_c + c;
                                let ki = ((ky * k + kx) * geo.in_c + c) * geo.filters + f;
                                acc += x.data()[xi] * kernels.data()[ki];
                            }
                        }
                    }
                    out.data_mut()[((img * geo.out_h + oy) * geo.out_w + ox) * geo.filters + f] = acc;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn same_padding_geometry() {
        let g = ConvGeometry::same(28, 28, 1, 32, 3, 2).unwrap();
        assert_eq!((g.out_h, g.out_w, g.pad_top, g.pad_left), (14, 14, 0, 0));
        let g = ConvGeometry::same(14, 14, 32, 64, 3, 2).unwrap();
        assert_eq!((g.out_h, g.out_w), (7, 7));
        let g = ConvGeometry::same(7, 7, 1, 1, 3, 2).unwrap();
        assert_eq!((g.out_h, g.pad_top), (4, 1));
        let g = ConvGeometry::same(28, 28, 32, 1, 3, 1).unwrap();
        assert_eq!((g.out_h, g.pad_top), (28, 1));
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[2, 5, 5, 1], &mut rng);
        let k = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &k, 1).unwrap(), x);
        assert_eq!(conv2d_transpose_forward(&x, &k, 1).unwrap(), x);
    }

    #[test]
    fn constant_image_all_ones_kernel() {
        let c = 0.7f64;
        let x = Tensor::full(&[1, 6, 6, 1], c);
        let k = Tensor::full(&[3, 3, 1, 1], 1.0);
        let y = conv2d_forward(&x, &k, 1).unwrap();
        for yy in 1..5 {
            for xx in 1..5 {
                assert!((y.data()[yy * 6 + xx] - 9.0 * c).abs() < 1e-12);
            }
        }
        // corners see a 2x2 window
        assert!((y.data()[0] - 4.0 * c).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(h, w, c, f, s) in &[(7, 7, 3, 4, 1), (8, 6, 2, 3, 2), (5, 9, 1, 2, 2), (28, 28, 1, 2, 2)] {
            let x = random(&[3, h, w, c], &mut rng);
            let k = random(&[3, 3, c, f], &mut rng);
            let fast = conv2d_forward(&x, &k, s).unwrap();
            let slow = conv2d_naive(&x, &k, s).unwrap();
            assert!(fast.max_abs_diff(&slow) < 1e-12);
        }
    }

    #[test]
    fn paper_architecture_extents() {
        let x = Tensor::<f32>::zeros(&[2, 28, 28, 1]);
        let k1 = Tensor::zeros(&[3, 3, 1, 32]);
        let k2 = Tensor::zeros(&[3, 3, 32, 64]);
        let h = conv2d_forward(&x, &k1, 2).unwrap();
        assert_eq!(h.shape(), &[2, 14, 14, 32]);
        let h = conv2d_forward(&h, &k2, 2).unwrap();
        assert_eq!(h.shape(), &[2, 7, 7, 64]);
        let kt = Tensor::zeros(&[3, 3, 64, 64]);
        let u = conv2d_transpose_forward(&h, &kt, 2).unwrap();
        assert_eq!(u.shape(), &[2, 14, 14, 64]);
        let kt2 = Tensor::zeros(&[3, 3, 32, 64]);
        let u = conv2d_transpose_forward(&u, &kt2, 2).unwrap();
        assert_eq!(u.shape(), &[2, 28, 28, 32]);
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(h, w, c, f, s) in &[(7, 7, 2, 3, 1), (14, 14, 3, 2, 2), (8, 6, 2, 2, 2), (4, 8, 1, 3, 2), (5, 9, 2, 2, 1)] {
            let k = random(&[3, 3, c, f], &mut rng);
            let x = random(&[2, h, w, c], &mut rng);
            let cx = conv2d_forward(&x, &k, s).unwrap();
            let y = random(cx.shape(), &mut rng);
            let lhs = cx.dot(&y);
            let ty = conv2d_transpose_forward(&y, &k, s).unwrap();
            assert_eq!(ty.shape(), x.shape());
            let rhs = x.dot(&ty);
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }

    #[test]
    fn conv_input_grad_is_transpose_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = random(&[3, 3, 3, 4], &mut rng);
        let x = random(&[2, 8, 8, 3], &mut rng);
        let g = random(&[2, 4, 4, 4], &mut rng);
        let (gx, _) = conv2d_backward(&x, &k, &g, 2).unwrap();
        let t = conv2d_transpose_forward(&g, &k, 2).unwrap();
        assert!(gx.max_abs_diff(&t) < 1e-12);
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let x = Tensor::<f32>::zeros(&[1, 4, 4, 2]);
        let k = Tensor::zeros(&[3, 3, 3, 1]);
        assert!(matches!(conv2d_forward(&x, &k, 1), Err(BvaeError::Dimension { .. })));
        let y = Tensor::<f32>::zeros(&[1, 4, 4, 2]);
        assert!(matches!(
            conv2d_transpose_forward(&y, &k, 2),
            Err(BvaeError::Dimension { .. })
        ));
    }
}
