//! Seven-block convolutional network over a single-lead window.
//!
//! Each block is conv (stride 1, same padding) → batch norm → ReLU →
//! max-pool(2). The "(L, 1, 1)" input of the original 2-D formulation has a
//! degenerate second axis, so everything here is 1-D. Activations are laid
//! out channel-major (`[channel][position]`); the flatten before the dense
//! head is position-major (`position * channels + channel`).

use crate::model::{sigmoid_unchecked, NormalizedWindow};
use crate::scalar::Scalar;

use super::ModelError;

pub const CONV_LAYERS: usize = 7;
pub const DENSE_LAYERS: usize = 2;
pub const POOL_LENGTH: usize = 2;
pub const DROPOUT_RATE: f64 = 0.532;
pub const BATCH_NORM_EPS: f64 = 1e-5;

/// Inference-mode batch normalization with running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn identity(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    fn lens_match(&self, n: usize) -> bool {
        [self.gamma.len(), self.beta.len(), self.mean.len(), self.var.len()].iter().all(|&l| l == n)
    }

    /// `(x - mean) / sqrt(var + eps) * gamma + beta` for one channel.
    #[inline]
    pub fn apply(&self, channel: usize, x: T, eps: T) -> T {
        (x - self.mean[channel]) / (self.var[channel] + eps).sqrt() * self.gamma[channel] + self.beta[channel]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_length: usize,
    pub pool_length: usize,
    /// `[out][in][k]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub bn: BatchNorm<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out][in]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    /// Present on hidden layers, absent on the output layer.
    pub bn: Option<BatchNorm<T>>,
    /// Stored for fidelity; dropout is the identity at inference.
    pub dropout_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel<T> {
    pub model_id: String,
    pub input_length: usize,
    pub input_channels: usize,
    pub conv: Vec<ConvLayer<T>>,
    pub dense: Vec<DenseLayer<T>>,
    pub output: DenseLayer<T>,
    pub bn_eps: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnOutput<T> {
    pub logit: T,
    pub probability: T,
    /// Post-activation output of the last hidden dense layer.
    pub embedding: Vec<T>,
}

fn shape_err(layer: impl Into<String>, detail: impl Into<String>) -> ModelError {
    ModelError::Shape { layer: layer.into(), detail: detail.into() }
}

/// Length after `layers` successive floor-halvings.
pub fn pooled_length(input_length: usize, layers: usize) -> usize {
    (0..layers).fold(input_length, |l, _| l / POOL_LENGTH)
}

impl<T: Scalar> CnnModel<T> {
    /// Checks the layer plan and tensor sizes. Returns the sequence lengths
    /// `[input, after pool 1, ..., after pool 7]`.
    pub fn validate(&self) -> Result<Vec<usize>, ModelError> {
        if self.conv.len() != CONV_LAYERS {
            return Err(shape_err("conv", format!("expected {CONV_LAYERS} conv layers, found {}", self.conv.len())));
        }
        if self.dense.len() != DENSE_LAYERS {
            return Err(shape_err("dense", format!("expected {DENSE_LAYERS} dense layers, found {}", self.dense.len())));
        }
        if self.input_channels != 1 {
            return Err(shape_err("input", "single-lead input must have one channel"));
        }
        let mut chain = vec![self.input_length];
        let (mut len, mut channels) = (self.input_length, self.input_channels);
        for (i, layer) in self.conv.iter().enumerate() {
            let name = format!("conv{}", i + 1);
            if layer.in_channels != channels {
                return Err(shape_err(name, format!("expects {} input channels, receives {channels}", layer.in_channels)));
            }
            if layer.kernel_length == 0 || layer.out_channels == 0 {
                return Err(shape_err(name, "empty kernel or zero output channels"));
            }
            if layer.pool_length != POOL_LENGTH {
                return Err(shape_err(name, format!("pool length {} is not {POOL_LENGTH}", layer.pool_length)));
            }
            let expect_w = layer.out_channels * layer.in_channels * layer.kernel_length;
            if layer.weight.len() != expect_w || layer.bias.len() != layer.out_channels || !layer.bn.lens_match(layer.out_channels) {
                return Err(shape_err(name, "tensor sizes disagree with the declared dimensions"));
            }
            len /= POOL_LENGTH;
            if len == 0 {
                return Err(shape_err(name, "sequence pooled to zero length"));
            }
            channels = layer.out_channels;
            chain.push(len);
        }
        let mut width = len * channels;
        for (i, layer) in self.dense.iter().enumerate() {
            let name = format!("dense{}", i + 1);
            check_dense(layer, &name, width, true)?;
            width = layer.out_dim;
        }
        check_dense(&self.output, "output", width, false)?;
        if self.output.out_dim != 1 {
            return Err(shape_err("output", "output layer must have one unit"));
        }
        Ok(chain)
    }

    /// Length of the last conv block's output.
    pub fn conv_output_length(&self) -> usize {
        pooled_length(self.input_length, self.conv.len())
    }

    pub fn embedding_dim(&self) -> usize {
        self.dense.last().map_or(0, |d| d.out_dim)
    }
}

fn check_dense<T: Scalar>(layer: &DenseLayer<T>, name: &str, width: usize, hidden: bool) -> Result<(), ModelError> {
    if layer.in_dim != width {
        return Err(shape_err(name, format!("expects {} inputs, receives {width}", layer.in_dim)));
    }
    if layer.out_dim == 0 || layer.weight.len() != layer.in_dim * layer.out_dim || layer.bias.len() != layer.out_dim {
        return Err(shape_err(name, "tensor sizes disagree with the declared dimensions"));
    }
    match (&layer.bn, hidden) {
        (Some(bn), true) if bn.lens_match(layer.out_dim) => Ok(()),
        (None, false) => Ok(()),
        _ => Err(shape_err(name, "batch norm presence or size is wrong")),
    }
}

/// Same-padded, stride-1 1-D convolution (cross-correlation).
/// `x` is `[in_channels][len]`; returns `[out_channels][len]`.
pub fn conv1d_same<T: Scalar>(
    x: &[T],
    in_channels: usize,
    len: usize,
    weight: &[T],
    bias: &[T],
    out_channels: usize,
    kernel: usize,
) -> Vec<T> {
    let pad = (kernel - 1) / 2;
    let mut out = vec![T::zero(); out_channels * len];
    for o in 0..out_channels {
        let row = &mut out[o * len..(o + 1) * len];
        row.iter_mut().for_each(|v| *v = bias[o]);
        for c in 0..in_channels {
            let xin = &x[c * len..(c + 1) * len];
            let taps = &weight[(o * in_channels + c) * kernel..(o * in_channels + c + 1) * kernel];
            for (j, &w) in taps.iter().enumerate() {
                let offset = j as isize - pad as isize;
                let lo = (-offset).max(0) as usize;
                let hi = (len as isize - offset).clamp(0, len as isize) as usize;
                for i in lo..hi {
                    row[i] += w * xin[(i as isize + offset) as usize];
                }
            }
        }
    }
    out
}

/// Batch norm then ReLU, in place, on `[channels][len]`.
pub fn batch_norm_relu<T: Scalar>(x: &mut [T], len: usize, bn: &BatchNorm<T>, eps: T) {
    for (c, row) in x.chunks_mut(len.max(1)).enumerate() {
        for v in row.iter_mut() {
            *v = relu(bn.apply(c, *v, eps));
        }
    }
}

/// ReLU that lets NaN through so the finiteness check still sees it.
#[inline]
fn relu<T: Scalar>(v: T) -> T {
    if v < T::zero() { T::zero() } else { v }
}

/// Non-overlapping max pooling with floor semantics on `[channels][len]`.
pub fn max_pool<T: Scalar>(x: &[T], channels: usize, len: usize, pool: usize) -> (Vec<T>, usize) {
    let out_len = len / pool;
    let mut out = Vec::with_capacity(channels * out_len);
    for c in 0..channels {
        let row = &x[c * len..(c + 1) * len];
        for i in 0..out_len {
            let seg = &row[i * pool..(i + 1) * pool];
            out.push(seg[1..].iter().fold(seg[0], |m, &v| if v > m || v.is_nan() { v } else { m }));
        }
    }
    (out, out_len)
}

/// `[channels][len]` → position-major flat vector.
pub fn flatten_position_major<T: Scalar>(x: &[T], channels: usize, len: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(channels * len);
    for l in 0..len {
        for c in 0..channels {
            out.push(x[c * len + l]);
        }
    }
    out
}

/// Affine part of a dense layer.
pub fn dense_affine<T: Scalar>(x: &[T], layer: &DenseLayer<T>) -> Vec<T> {
    (0..layer.out_dim)
        .map(|o| {
            let w = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
            w.iter().zip(x).fold(layer.bias[o], |acc, (&w, &x)| acc + w * x)
        })
        .collect()
}

fn ensure_finite<T: Scalar>(xs: &[T], layer: impl FnOnce() -> String) -> Result<(), ModelError> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::Numeric { layer: layer() })
    }
}

/// Forward pass over raw values of length `model.input_length`.
pub fn forward_values<T: Scalar>(model: &CnnModel<T>, values: &[T]) -> Result<CnnOutput<T>, ModelError> {
    if values.len() != model.input_length * model.input_channels {
        return Err(shape_err(
            "input",
            format!("expected {} values, got {}", model.input_length * model.input_channels, values.len()),
        ));
    }
    ensure_finite(values, || "input".into())?;
    let eps = model.bn_eps;
    let mut x = values.to_vec();
    let mut len = model.input_length;
    for (i, layer) in model.conv.iter().enumerate() {
        let mut y = conv1d_same(&x, layer.in_channels, len, &layer.weight, &layer.bias, layer.out_channels, layer.kernel_length);
        batch_norm_relu(&mut y, len, &layer.bn, eps);
        let (pooled, new_len) = max_pool(&y, layer.out_channels, len, layer.pool_length);
        ensure_finite(&pooled, || format!("conv{}", i + 1))?;
        x = pooled;
        len = new_len;
    }
    let channels = model.conv.last().map_or(model.input_channels, |l| l.out_channels);
    let mut h = flatten_position_major(&x, channels, len);
    for (i, layer) in model.dense.iter().enumerate() {
        let mut y = dense_affine(&h, layer);
        if let Some(bn) = &layer.bn {
            for (o, v) in y.iter_mut().enumerate() {
                *v = relu(bn.apply(o, *v, eps));
            }
        }
        ensure_finite(&y, || format!("dense{}", i + 1))?;
        h = y;
    }
    let logit = dense_affine(&h, &model.output)[0];
    ensure_finite(&[logit], || "output".into())?;
    Ok(CnnOutput { logit, probability: sigmoid_unchecked(logit), embedding: h })
}

pub fn cnn_forward<T: Scalar>(model: &CnnModel<T>, window: &NormalizedWindow<T>) -> Result<CnnOutput<T>, ModelError> {
    forward_values(model, window.values())
}
