//! Layer descriptions, cached forward/backward execution, and sequential
//! stacks.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::activation::{activation, activation_backward, Activation};
use super::conv::{
    conv2d_backward, conv2d_forward, conv2d_transpose_backward, conv2d_transpose_forward,
    ConvGeometry,
};
use super::dense::{dense_backward, dense_forward};
use crate::error::{BvaeError, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// One layer of a network. Convolutions always use "same" padding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    /// Maps `in_channels` to `filters` channels, upsampling by `stride`.
    Conv2dTranspose {
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    Activation {
        activation: Activation,
    },
    Flatten,
    /// Per-sample target shape.
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec::Dense { inputs, outputs }
    }

    pub fn conv(in_channels: usize, filters: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            filters,
            kernel,
            stride,
        }
    }

    pub fn conv_t(in_channels: usize, filters: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec::Conv2dTranspose {
            in_channels,
            filters,
            kernel,
            stride,
        }
    }

    pub fn act(activation: Activation) -> Self {
        LayerSpec::Activation { activation }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |detail: String| Err(BvaeError::dim(format!("{self:?}"), detail));
        match self {
            LayerSpec::Dense { inputs, outputs } => match input {
                [n] if n == inputs => Ok(vec![*outputs]),
                _ => bad(format!("expects [{inputs}], got {input:?}")),
            },
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                stride,
            } => match *input {
                [h, w, c] if c == *in_channels => {
                    let g = ConvGeometry::same(h, w, c, *filters, *kernel, *stride)?;
                    Ok(vec![g.out_h, g.out_w, *filters])
                }
                _ => bad(format!("expects [H, W, {in_channels}], got {input:?}")),
            },
            LayerSpec::Conv2dTranspose {
                in_channels,
                filters,
                stride,
                ..
            } => match *input {
                [h, w, c] if c == *in_channels => Ok(vec![h * stride, w * stride, *filters]),
                _ => bad(format!("expects [H, W, {in_channels}], got {input:?}")),
            },
            LayerSpec::Activation { .. } => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape { shape } => {
                if shape.iter().product::<usize>() == input.iter().product::<usize>() {
                    Ok(shape.clone())
                } else {
                    bad(format!("cannot reshape {input:?} to {shape:?}"))
                }
            }
        }
    }

    /// Shapes of the trainable tensors, kernel/weights first then bias.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => vec![vec![inputs, outputs], vec![outputs]],
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                ..
            } => vec![vec![kernel, kernel, in_channels, filters], vec![filters]],
            // kernel is stored as the adjoint convolution's [k, k, out, in]
            LayerSpec::Conv2dTranspose {
                in_channels,
                filters,
                kernel,
                ..
            } => vec![vec![kernel, kernel, filters, in_channels], vec![filters]],
            _ => vec![],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params<T: Scalar>(&self, rng: &mut Rng) -> Vec<Tensor<T>> {
        let shapes = self.param_shapes();
        let (fan_in, fan_out) = match *self {
            LayerSpec::Dense { inputs, outputs } => (inputs, outputs),
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                ..
            } => (kernel * kernel * in_channels, kernel * kernel * filters),
            LayerSpec::Conv2dTranspose {
                in_channels,
                filters,
                kernel,
                ..
            } => (kernel * kernel * filters, kernel * kernel * in_channels),
            _ => return vec![],
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut w = Tensor::zeros(&shapes[0]);
        for v in w.data_mut() {
            *v = T::lit(rng.random_range(-limit..limit));
        }
        vec![w, Tensor::zeros(&shapes[1])]
    }
}

/// Values retained from the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub enum LayerCache<T> {
    Input(Tensor<T>),
    Output(Tensor<T>),
    InputShape(Vec<usize>),
}

fn add_bias_nhwc<T: Scalar>(x: &mut Tensor<T>, bias: &Tensor<T>) {
    let c = bias.len();
    for px in x.data_mut().chunks_mut(c) {
        for (v, &b) in px.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
}

fn bias_grad_nhwc<T: Scalar>(grad_out: &Tensor<T>, channels: usize) -> Tensor<T> {
    let mut gb = Tensor::zeros(&[channels]);
    for px in grad_out.data().chunks(channels) {
        for (acc, &g) in gb.data_mut().iter_mut().zip(px) {
            *acc += g;
        }
    }
    gb
}

/// Stateless forward evaluation of one layer.
pub fn layer_forward<T: Scalar>(
    spec: &LayerSpec,
    params: &[Tensor<T>],
    x: &Tensor<T>,
) -> Result<Tensor<T>> {
    match spec {
        LayerSpec::Dense { .. } => dense_forward(x, &params[0], &params[1]),
        LayerSpec::Conv2d { stride, .. } => {
            let mut y = conv2d_forward(x, &params[0], *stride)?;
            add_bias_nhwc(&mut y, &params[1]);
            Ok(y)
        }
        LayerSpec::Conv2dTranspose { stride, .. } => {
            let mut y = conv2d_transpose_forward(x, &params[0], *stride)?;
            add_bias_nhwc(&mut y, &params[1]);
            Ok(y)
        }
        LayerSpec::Activation { activation: a } => Ok(activation(*a, x)),
        LayerSpec::Flatten | LayerSpec::Reshape { .. } => {
            let per = spec.output_shape(&x.shape()[1..])?;
            let mut shape = vec![x.rows()];
            shape.extend(per);
            x.clone().reshape(&shape)
        }
    }
}

/// Reverse-mode step for one layer: `(grad_input, grad_params)`.
pub fn layer_backward<T: Scalar>(
    spec: &LayerSpec,
    params: &[Tensor<T>],
    cache: Option<&LayerCache<T>>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    let missing = || BvaeError::Usage(format!("backward through {spec:?} without a forward cache"));
    let cache = cache.ok_or_else(missing)?;
    match (spec, cache) {
        (LayerSpec::Dense { .. }, LayerCache::Input(x)) => {
            let (gx, gw, gb) = dense_backward(x, &params[0], &params[1], grad_out)?;
            Ok((gx, vec![gw, gb]))
        }
        (LayerSpec::Conv2d { stride, filters, .. }, LayerCache::Input(x)) => {
            let (gx, gk) = conv2d_backward(x, &params[0], grad_out, *stride)?;
            Ok((gx, vec![gk, bias_grad_nhwc(grad_out, *filters)]))
        }
        (LayerSpec::Conv2dTranspose { stride, filters, .. }, LayerCache::Input(x)) => {
            let (gx, gk) = conv2d_transpose_backward(x, &params[0], grad_out, *stride)?;
            Ok((gx, vec![gk, bias_grad_nhwc(grad_out, *filters)]))
        }
        (LayerSpec::Activation { activation: a }, LayerCache::Output(y)) => {
            if y.shape() != grad_out.shape() {
                return Err(BvaeError::dim(
                    "activation backward",
                    format!("grad {:?} vs output {:?}", grad_out.shape(), y.shape()),
                ));
            }
            Ok((activation_backward(*a, y, grad_out), vec![]))
        }
        (LayerSpec::Flatten | LayerSpec::Reshape { .. }, LayerCache::InputShape(s)) => {
            Ok((grad_out.clone().reshape(s)?, vec![]))
        }
        _ => Err(BvaeError::Usage(format!(
            "cache kind does not belong to layer {spec:?}"
        ))),
    }
}

/// A layer with its parameters, accumulated gradients, and forward cache.
#[derive(Clone, Debug)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub params: Vec<Tensor<T>>,
    pub grads: Vec<Tensor<T>>,
    cache: Option<LayerCache<T>>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(spec: LayerSpec, params: Vec<Tensor<T>>) -> Result<Self> {
        let shapes = spec.param_shapes();
        if shapes.len() != params.len()
            || shapes.iter().zip(&params).any(|(s, p)| s.as_slice() != p.shape())
        {
            return Err(BvaeError::dim(
                format!("{spec:?}"),
                format!("parameter shapes {:?} expected {shapes:?}", params.iter().map(|p| p.shape().to_vec()).collect::<Vec<_>>()),
            ));
        }
        let grads = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Ok(Self {
            spec,
            params,
            grads,
            cache: None,
        })
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        match &self.spec {
            LayerSpec::Flatten | LayerSpec::Reshape { .. } => {
                let per = self.spec.output_shape(&x.shape()[1..])?;
                let mut shape = vec![x.rows()];
                shape.extend(per);
                self.cache = Some(LayerCache::InputShape(x.shape().to_vec()));
                x.reshape(&shape)
            }
            LayerSpec::Activation { .. } => {
                let y = layer_forward(&self.spec, &self.params, &x)?;
                self.cache = Some(LayerCache::Output(y.clone()));
                Ok(y)
            }
            _ => {
                let y = layer_forward(&self.spec, &self.params, &x)?;
                self.cache = Some(LayerCache::Input(x));
                Ok(y)
            }
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (gx, gp) = layer_backward(&self.spec, &self.params, self.cache.as_ref(), grad_out)?;
        for (acc, g) in self.grads.iter_mut().zip(&gp) {
            acc.add_assign(g);
        }
        Ok(gx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Trainable tensor paired with its gradient, as seen by the optimizer.
pub struct ParamRef<'a, T> {
    pub name: String,
    pub value: &'a mut Tensor<T>,
    pub grad: &'a Tensor<T>,
}

/// A chain of layers evaluated in order.
#[derive(Clone, Debug)]
pub struct Sequential<T> {
    pub name: String,
    pub layers: Vec<Layer<T>>,
    pub input_shape: Vec<usize>,
}

impl<T: Scalar> Sequential<T> {
    /// Validates shape composition and initializes parameters from `rng`.
    pub fn new(name: &str, input_shape: &[usize], specs: Vec<LayerSpec>, rng: &mut Rng) -> Result<Self> {
        Self::check_composition(name, input_shape, &specs)?;
        let layers = specs
            .into_iter()
            .map(|s| {
                let p = s.init_params(rng);
                Layer::new(s, p)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            name: name.to_string(),
            layers,
            input_shape: input_shape.to_vec(),
        })
    }

    pub fn from_parts(
        name: &str,
        input_shape: &[usize],
        specs: Vec<LayerSpec>,
        params: Vec<Vec<Tensor<T>>>,
    ) -> Result<Self> {
        Self::check_composition(name, input_shape, &specs)?;
        if specs.len() != params.len() {
            return Err(BvaeError::dim(name, "parameter groups do not match layers"));
        }
        let layers = specs
            .into_iter()
            .zip(params)
            .map(|(s, p)| Layer::new(s, p))
            .collect::<Result<_>>()?;
        Ok(Self {
            name: name.to_string(),
            layers,
            input_shape: input_shape.to_vec(),
        })
    }

    fn check_composition(name: &str, input_shape: &[usize], specs: &[LayerSpec]) -> Result<Vec<usize>> {
        let mut shape = input_shape.to_vec();
        for (i, s) in specs.iter().enumerate() {
            shape = s.output_shape(&shape).map_err(|e| {
                BvaeError::dim(format!("{name} layer {i}"), e.to_string())
            })?;
        }
        Ok(shape)
    }

    pub fn output_shape(&self) -> Vec<usize> {
        let specs: Vec<_> = self.layers.iter().map(|l| l.spec.clone()).collect();
        Self::check_composition(&self.name, &self.input_shape, &specs).expect("validated at construction")
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    /// Forward pass that records caches for `backward`.
    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(&x)?;
        let mut h = x;
        for layer in &mut self.layers {
            h = layer.forward(h)?;
        }
        Ok(h)
    }

    /// Forward pass without caches.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer_forward(&layer.spec, &layer.params, &h)?;
        }
        Ok(h)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.ndim() == 0 || x.shape()[1..] != self.input_shape[..] {
            return Err(BvaeError::dim(
                self.name.as_str(),
                format!("input {:?} expected [B, {:?}]", x.shape(), self.input_shape),
            ));
        }
        Ok(())
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grads(&mut self) {
        for l in &mut self.layers {
            l.grads.iter_mut().for_each(|g| g.fill(T::zero()));
        }
    }

    pub fn clear_caches(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    pub fn param_refs(&mut self) -> Vec<ParamRef<'_, T>> {
        let name = &self.name;
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                l.params
                    .iter_mut()
                    .zip(l.grads.iter())
                    .enumerate()
                    .map(move |(j, (value, grad))| ParamRef {
                        name: format!("{name}.{i}.{}", if j == 0 { "w" } else { "b" }),
                        value,
                        grad,
                    })
            })
            .collect()
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn grads(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| l.grads.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    pub fn param_groups(&self) -> Vec<Vec<Tensor<T>>> {
        self.layers.iter().map(|l| l.params.clone()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Sequential<U> {
        Sequential {
            name: self.name.clone(),
            input_shape: self.input_shape.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer::new(l.spec.clone(), l.params.iter().map(Tensor::cast).collect()).expect("same shapes"))
                .collect(),
        }
    }
}
