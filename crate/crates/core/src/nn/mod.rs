//! Differentiable layer kernels with explicit backward passes, plus Adam.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod layer;
pub mod loss;

pub use activation::{activation, activation_backward, sigmoid, Activation};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{
    conv2d_backward, conv2d_forward, conv2d_naive, conv2d_transpose_backward,
    conv2d_transpose_forward, ConvGeometry,
};
pub use dense::{dense_backward, dense_forward};
pub use gradcheck::{grad_check, layer_cases, layer_grad_check, layer_grad_checks, relative_error, GradCheckReport};
pub use layer::{layer_backward, layer_forward, Layer, LayerCache, LayerSpec, ParamRef, Sequential};
pub use loss::{log_softmax_rows, one_hot, softmax_cross_entropy};
