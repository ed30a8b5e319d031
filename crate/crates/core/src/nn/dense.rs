//! Fully connected layer kernels.

use crate::error::{BvaeError, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

fn check<T: Scalar>(
    context: &str,
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize)> {
    let (b, n) = match *x.shape() {
        [b, n] => (b, n),
        ref s => return Err(BvaeError::dim(context, format!("input must be [B, n], got {s:?}"))),
    };
    let m = match *weights.shape() {
        [wn, m] if wn == n => m,
        ref s => {
            return Err(BvaeError::dim(
                context,
                format!("weights {s:?} do not accept {n} inputs"),
            ))
        }
    };
    if bias.shape() != [m] {
        return Err(BvaeError::dim(
            context,
            format!("bias {:?} does not match {m} outputs", bias.shape()),
        ));
    }
    Ok((b, n, m))
}

/// `out[b, j] = sum_i x[b, i] * w[i, j] + bias[j]`.
pub fn dense_forward<T: Scalar>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (b, n, m) = check("dense", x, weights, bias)?;
    let mut out = Tensor::zeros(&[b, m]);
    for r in 0..b {
        out.row_mut(r).copy_from_slice(bias.data());
    }
    gemm(
        MatRef::new(x.data(), b, n),
        MatRef::new(weights.data(), n, m),
        T::one(),
        out.data_mut(),
    );
    Ok(out)
}

/// Returns `(grad_x, grad_w, grad_bias)`.
pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (b, n, m) = check("dense backward", x, weights, bias)?;
    if grad_out.shape() != [b, m] {
        return Err(BvaeError::dim(
            "dense backward",
            format!("grad_output {:?} expected [{b}, {m}]", grad_out.shape()),
        ));
    }
    let mut gx = Tensor::zeros(&[b, n]);
    gemm(
        MatRef::new(grad_out.data(), b, m),
        MatRef::new(weights.data(), n, m).t(),
        T::zero(),
        gx.data_mut(),
    );
    let mut gw = Tensor::zeros(&[n, m]);
    gemm(
        MatRef::new(x.data(), b, n).t(),
        MatRef::new(grad_out.data(), b, m),
        T::zero(),
        gw.data_mut(),
    );
    let mut gb = Tensor::zeros(&[m]);
    for r in 0..b {
        for (acc, &g) in gb.data_mut().iter_mut().zip(grad_out.row(r)) {
            *acc += g;
        }
    }
    Ok((gx, gw, gb))
}
