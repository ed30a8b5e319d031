use serde::{Deserialize, Serialize};

use crate::error::{BvaeError, Result};
use crate::nn::{Activation, LayerSpec, Sequential};
use crate::rng;
use crate::tensor::{Scalar, Tensor};

/// log σ² is clamped to this range before use.
pub const LOG_VAR_CLAMP: f32 = 10.0;

/// Final decoder activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Sigmoid,
    Relu,
}

impl OutputActivation {
    pub fn as_activation(self) -> Activation {
        match self {
            OutputActivation::Sigmoid => Activation::Sigmoid,
            OutputActivation::Relu => Activation::Relu,
        }
    }
}

/// Encoder/decoder geometry.
///
/// Encoder: conv(32, s2) → conv(64, s2) → flatten → dense(16) → dense(2k),
/// ReLU throughout, the last layer emitting `[μ | log σ²]`. Decoder:
/// dense(h/4·w/4·64) → reshape → conv_t(64, s2) → conv_t(32, s2) → conv(1),
/// ReLU except the output activation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VaeArch {
    pub height: usize,
    pub width: usize,
    pub conv_filters: [usize; 2],
    pub hidden: usize,
    pub latent_dim: usize,
    pub output: OutputActivation,
}

impl VaeArch {
    pub fn mnist(latent_dim: usize, output: OutputActivation) -> Self {
        Self {
            height: 28,
            width: 28,
            conv_filters: [32, 64],
            hidden: 16,
            latent_dim,
            output,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height % 4 != 0 || self.width % 4 != 0 || self.height == 0 || self.width == 0 {
            return Err(BvaeError::Config(format!(
                "image extents {}x{} must be positive multiples of 4",
                self.height, self.width
            )));
        }
        if self.latent_dim == 0 {
            return Err(BvaeError::Config("latent_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        let [f1, f2] = self.conv_filters;
        let flat = (self.height / 4) * (self.width / 4) * f2;
        vec![
            LayerSpec::conv(1, f1, 3, 2),
            LayerSpec::act(Activation::Relu),
            LayerSpec::conv(f1, f2, 3, 2),
            LayerSpec::act(Activation::Relu),
            LayerSpec::Flatten,
            LayerSpec::dense(flat, self.hidden),
            LayerSpec::act(Activation::Relu),
            LayerSpec::dense(self.hidden, 2 * self.latent_dim),
        ]
    }

    /// Decoder up to the output logits (activation applied separately).
    pub fn decoder_specs(&self) -> Vec<LayerSpec> {
        let [f1, f2] = self.conv_filters;
        let (h4, w4) = (self.height / 4, self.width / 4);
        vec![
            LayerSpec::dense(self.latent_dim, h4 * w4 * f2),
            LayerSpec::act(Activation::Relu),
            LayerSpec::Reshape {
                shape: vec![h4, w4, f2],
            },
            LayerSpec::conv_t(f2, f2, 3, 2),
            LayerSpec::act(Activation::Relu),
            LayerSpec::conv_t(f2, f1, 3, 2),
            LayerSpec::act(Activation::Relu),
            LayerSpec::conv(f1, 1, 3, 1),
        ]
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [self.height, self.width, 1]
    }
}

/// Encoder and decoder networks.
#[derive(Clone, Debug)]
pub struct VaeModel<T = f32> {
    pub arch: VaeArch,
    pub encoder: Sequential<T>,
    pub decoder: Sequential<T>,
}

impl<T: Scalar> VaeModel<T> {
    /// Glorot-initialized model; encoder and decoder draw from separate
    /// streams derived from `seed`.
    pub fn new(arch: VaeArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let encoder = Sequential::new(
            "encoder",
            &arch.image_shape(),
            arch.encoder_specs(),
            &mut rng::stream(seed, "init-encoder", 0),
        )?;
        let decoder = Sequential::new(
            "decoder",
            &[arch.latent_dim],
            arch.decoder_specs(),
            &mut rng::stream(seed, "init-decoder", 0),
        )?;
        debug_assert_eq!(decoder.output_shape(), arch.image_shape());
        Ok(Self {
            arch,
            encoder,
            decoder,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    /// `(μ, log σ²)` for a batch, log σ² clamped.
    pub fn encode(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let out = self.encoder.predict(x)?;
        let (mu, lv) = split_heads(&out, self.arch.latent_dim);
        Ok((mu, clamp_log_var(&lv)))
    }

    /// Means only, processed in chunks to bound memory.
    pub fn encode_means(&self, x: &Tensor<T>, chunk: usize) -> Result<Tensor<T>> {
        let n = x.rows();
        let k = self.arch.latent_dim;
        let mut out = Tensor::zeros(&[n, k]);
        let mut start = 0;
        while start < n {
            let end = (start + chunk.max(1)).min(n);
            let (mu, _) = self.encode(&x.slice_rows(start, end))?;
            out.data_mut()[start * k..end * k].copy_from_slice(mu.data());
            start = end;
        }
        Ok(out)
    }

    /// Output logits before the final activation.
    pub fn decode_logits(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        self.decoder.predict(z)
    }

    /// Reconstructions `x̂` with the output activation applied.
    pub fn decode(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let logits = self.decode_logits(z)?;
        Ok(crate::nn::activation(self.arch.output.as_activation(), &logits))
    }

    pub fn cast<U: Scalar>(&self) -> VaeModel<U> {
        VaeModel {
            arch: self.arch.clone(),
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
        }
    }
}

/// Splits `[B, 2k]` into `([B, k], [B, k])`.
pub fn split_heads<T: Scalar>(out: &Tensor<T>, k: usize) -> (Tensor<T>, Tensor<T>) {
    let b = out.rows();
    let mut mu = Tensor::zeros(&[b, k]);
    let mut lv = Tensor::zeros(&[b, k]);
    for r in 0..b {
        let row = out.row(r);
        mu.row_mut(r).copy_from_slice(&row[..k]);
        lv.row_mut(r).copy_from_slice(&row[k..]);
    }
    (mu, lv)
}

/// Inverse of [`split_heads`].
pub fn join_heads<T: Scalar>(mu: &Tensor<T>, lv: &Tensor<T>) -> Tensor<T> {
    let (b, k) = (mu.rows(), mu.row_len());
    let mut out = Tensor::zeros(&[b, 2 * k]);
    for r in 0..b {
        out.row_mut(r)[..k].copy_from_slice(mu.row(r));
        out.row_mut(r)[k..].copy_from_slice(lv.row(r));
    }
    out
}

pub fn clamp_log_var<T: Scalar>(lv: &Tensor<T>) -> Tensor<T> {
    let c = T::lit(LOG_VAR_CLAMP as f64);
    lv.map(|v| v.max(-c).min(c))
}
