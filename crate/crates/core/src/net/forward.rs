use super::config::{InputMode, COMPLEX_CHANNELS};
use super::params::{Layer, NetworkParams, Role};
use crate::error::{Error, Result};
use crate::image::{ComplexImage, Image};
use crate::scalar::Scalar;
use crate::tensor::{
    batchnorm_backward, batchnorm_forward, channel_concat, channel_concat_backward, channel_mean_pair,
    channel_mean_pair_backward, conv2d_backward, conv2d_forward, elementwise_add, magnitude, relu,
    relu_backward, BatchNormCache, Mode, Tensor, MAGNITUDE_EPS,
};

/// What one layer kept for its backward pass.
#[derive(Clone, Debug)]
pub struct LayerCache<T> {
    pub role: Role,
    /// Conv input.
    pub x: Tensor<T>,
    pub bn: Option<BatchNormCache<T>>,
    /// ReLU input, when the layer has one.
    pub pre_relu: Option<Tensor<T>>,
}

/// All intermediates of one forward pass. Absent blocks leave `None`.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub mode: Mode,
    pub input: Tensor<T>,
    /// Average of the two NEX inputs (`a'`).
    pub a_prime: Tensor<T>,
    pub b: Tensor<T>,
    pub c: Option<Tensor<T>>,
    pub d: Tensor<T>,
    pub e: Option<Tensor<T>>,
    pub f: Option<Tensor<T>>,
    pub g: Tensor<T>,
    pub h: Tensor<T>,
    pub caches: Vec<LayerCache<T>>,
}

/// Gradients of one layer; `None` where the parameter is not trained.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads<T> {
    pub role: Role,
    pub kernels: Tensor<T>,
    pub bias: Option<Vec<T>>,
    pub gamma: Option<Vec<T>>,
    pub beta: Option<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrads<T>>,
    pub input: Tensor<T>,
}

impl<T: Scalar> Gradients<T> {
    /// Same order and names as [`NetworkParams::trainable`].
    pub fn blocks(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        for (idx, l) in self.layers.iter().enumerate() {
            let name = format!("{idx:02}.{}", l.role.name());
            out.push((format!("{name}.kernels"), l.kernels.data()));
            if let Some(b) = &l.bias {
                out.push((format!("{name}.bias"), b.as_slice()));
            }
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push((format!("{name}.gamma"), g.as_slice()));
                out.push((format!("{name}.beta"), b.as_slice()));
            }
        }
        out
    }

    pub fn layer(&self, role: Role) -> Option<&LayerGrads<T>> {
        self.layers.iter().find(|l| l.role == role)
    }
}

fn layer_forward<T: Scalar>(layer: &Layer<T>, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, LayerCache<T>)> {
    let mut y = conv2d_forward(x, &layer.conv)?;
    let mut bn_cache = None;
    if let Some(bn) = &layer.bn {
        let (out, cache) = batchnorm_forward(&y, bn, mode)?;
        y = out;
        bn_cache = Some(cache);
    }
    let mut pre_relu = None;
    if layer.relu {
        let out = relu(&y);
        pre_relu = Some(y);
        y = out;
    }
    Ok((y, LayerCache { role: layer.role, x: x.clone(), bn: bn_cache, pre_relu }))
}

fn layer_backward<T: Scalar>(
    layer: &Layer<T>,
    cache: &LayerCache<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, LayerGrads<T>)> {
    let mut g = match &cache.pre_relu {
        Some(pre) => relu_backward(grad_out, pre)?,
        None => grad_out.clone(),
    };
    let mut gamma = None;
    let mut beta = None;
    if let Some(bc) = &cache.bn {
        let (gx, gg, gb) = batchnorm_backward(&g, bc)?;
        g = gx;
        gamma = Some(gg);
        beta = Some(gb);
    }
    let (gx, conv_grads) = conv2d_backward(&g, &cache.x, &layer.conv)?;
    let bias = layer.trains_bias().then_some(conv_grads.bias);
    Ok((gx, LayerGrads { role: layer.role, kernels: conv_grads.kernels, bias, gamma, beta }))
}

fn check_input<T: Scalar>(params: &NetworkParams<T>, input: &Tensor<T>) -> Result<()> {
    let expect = params.config.input_channels();
    if input.channels() != expect {
        return Err(Error::shape(format!(
            "network expects {expect} input channels, got shape {:?}",
            input.shape()
        )));
    }
    Ok(())
}

/// Runs the network. Train mode normalizes with batch statistics; eval mode
/// uses the running statistics and is a pure function of its arguments.
pub fn forward<T: Scalar>(params: &NetworkParams<T>, input: &Tensor<T>, mode: Mode) -> Result<ForwardTrace<T>> {
    check_input(params, input)?;
    let a_prime = match params.config.input_mode {
        InputMode::Dual => channel_mean_pair(input)?,
        InputMode::Single => input.clone(),
    };
    let mut caches = Vec::with_capacity(params.layers.len());
    let run = |role: Role, x: &Tensor<T>, caches: &mut Vec<LayerCache<T>>| -> Result<Tensor<T>> {
        let layer = params.layer(role).ok_or_else(|| Error::invalid(format!("missing layer {}", role.name())))?;
        let (y, cache) = layer_forward(layer, x, mode)?;
        caches.push(cache);
        Ok(y)
    };

    let mut b = run(Role::Extract(1), input, &mut caches)?;
    for k in 2..=6 {
        b = run(Role::Extract(k), &b, &mut caches)?;
    }
    let f = match params.config.variant.has_transport() {
        true => Some(run(Role::Transport, &b, &mut caches)?),
        false => None,
    };
    let (c, d, e) = if params.config.variant.has_residual() {
        let c = run(Role::Residual1, &b, &mut caches)?;
        let d = elementwise_add(&c, &a_prime)?;
        let e = run(Role::ResidualFeatures, &d, &mut caches)?;
        (Some(c), d, Some(e))
    } else {
        (None, a_prime.clone(), None)
    };
    let merged = match (&e, &f) {
        (Some(e), Some(f)) => channel_concat(e, f)?,
        (Some(e), None) => e.clone(),
        (None, Some(f)) => f.clone(),
        (None, None) => return Err(Error::invalid("network has no bridge block")),
    };
    let mut y = run(Role::Consolidate, &merged, &mut caches)?;
    for k in 1..=3 {
        y = run(Role::Assembly(k), &y, &mut caches)?;
    }
    let g = run(Role::Residual2, &y, &mut caches)?;
    let h = elementwise_add(&g, &d)?;
    Ok(ForwardTrace { mode, input: input.clone(), a_prime, b, c, d, e, f, g, h, caches })
}

/// Parameter and input gradients of a train-mode trace given `dL/dh`.
pub fn backward<T: Scalar>(params: &NetworkParams<T>, trace: &ForwardTrace<T>, grad_h: &Tensor<T>) -> Result<Gradients<T>> {
    if trace.mode != Mode::Train {
        return Err(Error::invalid("backward requires a train-mode forward trace"));
    }
    grad_h.ensure_same_shape(&trace.h, "backward grad_h")?;
    if trace.caches.len() != params.layers.len() {
        return Err(Error::invalid("trace does not belong to these parameters"));
    }
    let mut grads: Vec<Option<LayerGrads<T>>> = vec![None; params.layers.len()];
    let mut step = |role: Role, g: &Tensor<T>| -> Result<Tensor<T>> {
        let idx = params.layer_index(role).ok_or_else(|| Error::invalid(format!("missing layer {}", role.name())))?;
        let cache = &trace.caches[idx];
        if cache.role != role {
            return Err(Error::invalid("trace does not belong to these parameters"));
        }
        let (gx, lg) = layer_backward(&params.layers[idx], cache, g)?;
        grads[idx] = Some(lg);
        Ok(gx)
    };

    // h = g + d
    let mut grad_d = grad_h.clone();
    let mut gy = step(Role::Residual2, grad_h)?;
    for k in (1..=3).rev() {
        gy = step(Role::Assembly(k), &gy)?;
    }
    let g_merged = step(Role::Consolidate, &gy)?;
    let (grad_e, grad_f) = match (&trace.e, &trace.f) {
        (Some(e), Some(_)) => {
            let (ge, gf) = channel_concat_backward(&g_merged, e.channels())?;
            (Some(ge), Some(gf))
        }
        (Some(_), None) => (Some(g_merged), None),
        _ => (None, Some(g_merged)),
    };

    let mut grad_b = Tensor::zeros(trace.b.shape());
    if let Some(ge) = grad_e {
        let gd = step(Role::ResidualFeatures, &ge)?;
        grad_d = elementwise_add(&grad_d, &gd)?;
        // d = c + a'
        let gb = step(Role::Residual1, &grad_d)?;
        grad_b = elementwise_add(&grad_b, &gb)?;
    }
    let grad_a = grad_d;
    if let Some(gf) = grad_f {
        let gb = step(Role::Transport, &gf)?;
        grad_b = elementwise_add(&grad_b, &gb)?;
    }
    let mut gx = grad_b;
    for k in (1..=6).rev() {
        gx = step(Role::Extract(k), &gx)?;
    }
    let skip = match params.config.input_mode {
        InputMode::Dual => channel_mean_pair_backward(&grad_a),
        InputMode::Single => grad_a,
    };
    let input = elementwise_add(&gx, &skip)?;
    let layers = grads.into_iter().map(|g| g.expect("every layer visited")).collect();
    Ok(Gradients { layers, input })
}

impl<T: Scalar> NetworkParams<T> {
    /// Folds the batch statistics of a train-mode trace into the running
    /// averages used by eval mode.
    pub fn update_running_stats(&mut self, trace: &ForwardTrace<T>) -> Result<()> {
        if trace.mode != Mode::Train || trace.caches.len() != self.layers.len() {
            return Err(Error::invalid("running stats need a train-mode trace of this network"));
        }
        for (layer, cache) in self.layers.iter_mut().zip(&trace.caches) {
            if let (Some(bn), Some(bc)) = (layer.bn.as_mut(), cache.bn.as_ref()) {
                bn.update_running_stats(bc)?;
            }
        }
        Ok(())
    }
}

/// Eval-mode forward; returns the complex estimate `h` and its magnitude.
pub fn denoise<T: Scalar>(params: &NetworkParams<T>, input: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let trace = forward(params, input, Mode::Eval)?;
    let mag = magnitude(&trace.h, T::lit(MAGNITUDE_EPS))?;
    Ok((trace.h, mag))
}

/// Packs one slice into a 1-batch input tensor matching `mode`.
pub fn slice_input<T: Scalar>(mode: InputMode, nex1: &ComplexImage, nex2: &ComplexImage) -> Result<Tensor<T>> {
    let (h, w) = nex1.dims();
    if nex2.dims() != (h, w) {
        return Err(Error::shape("NEX images differ in size"));
    }
    let planes: Vec<&[f64]> = match mode {
        InputMode::Dual => vec![nex1.re.data(), nex1.im.data(), nex2.re.data(), nex2.im.data()],
        InputMode::Single => {
            return slice_input(InputMode::Dual, nex1, nex2).and_then(|t: Tensor<T>| channel_mean_pair(&t));
        }
    };
    let data = planes.into_iter().flat_map(|p| p.iter().map(|&v| T::lit(v))).collect();
    Tensor::from_vec([1, 2 * COMPLEX_CHANNELS, h, w], data)
}

/// Denoises one slice from its two NEX acquisitions.
pub fn denoise_slice<T: Scalar>(
    params: &NetworkParams<T>,
    nex1: &ComplexImage,
    nex2: &ComplexImage,
) -> Result<(ComplexImage, Image<f64>)> {
    let input = slice_input::<T>(params.config.input_mode, nex1, nex2)?;
    let (h, mag) = denoise(params, &input)?;
    let (rows, cols) = nex1.dims();
    let to_img = |s: &[T]| Image::from_vec(rows, cols, s.iter().map(|v| v.to_f64_lossy()).collect());
    let complex = ComplexImage::new(to_img(h.plane(0, 0))?, to_img(h.plane(0, 1))?)?;
    Ok((complex, to_img(mag.plane(0, 0))?))
}
