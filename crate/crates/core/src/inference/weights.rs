//! Weight file container (`.ecgw`).
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ECGW"
//! 4       4     format version, u32 little-endian (currently 1)
//! 8       4     header length H, u32 little-endian
//! 12      H     header, UTF-8 JSON (layer plan, tensor list, optional ensemble)
//! 12+H    ...   tensor data: little-endian f32, tensors in header order,
//!               each tensor row-major in its declared shape
//! ```
//!
//! The tensor list must follow the plan exactly: for every conv layer
//! `convN.weight [out,in,k]`, `convN.bias [out]`, `convN.bn.{gamma,beta,mean,var} [out]`;
//! for every hidden dense layer `denseN.weight [out,in]`, `denseN.bias`,
//! `denseN.bn.*`; then `output.weight [1,in]`, `output.bias [1]`.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::cnn::{BatchNorm, CnnModel, ConvLayer, DenseLayer, BATCH_NORM_EPS, POOL_LENGTH};
use super::ensemble::{EnsembleWire, TreeEnsemble};
use super::{ModelError, ModelKind};

pub const MAGIC: &[u8; 4] = b"ECGW";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_length: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "same")]
    pub padding: String,
    #[serde(default = "two")]
    pub pool_length: usize,
}

fn one() -> usize {
    1
}
fn two() -> usize {
    POOL_LENGTH
}
fn same() -> String {
    "same".into()
}
fn default_eps() -> f64 {
    BATCH_NORM_EPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    #[serde(default)]
    pub dropout_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightHeader {
    pub model_id: String,
    pub kind: ModelKind,
    pub dtype: String,
    pub input_length: usize,
    pub input_channels: usize,
    #[serde(default = "default_eps")]
    pub batch_norm_eps: f64,
    pub conv: Vec<ConvSpec>,
    pub dense: Vec<DenseSpec>,
    pub output: DenseSpec,
    pub tensors: Vec<TensorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub(crate) ensemble: Option<EnsembleWire>,
}

/// Model read from a weight file.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedModel<T> {
    pub kind: ModelKind,
    pub cnn: CnnModel<T>,
    pub ensemble: Option<TreeEnsemble<T>>,
}

fn format_err(msg: impl Into<String>) -> ModelError {
    ModelError::Format(msg.into())
}

fn shape_err(layer: &str, detail: impl Into<String>) -> ModelError {
    ModelError::Shape { layer: layer.to_string(), detail: detail.into() }
}

/// `(tensor name, shape, owning layer)` in file order.
fn expected_tensors(h: &WeightHeader) -> Vec<(String, Vec<usize>, String)> {
    let mut out = Vec::new();
    let push_bn = |out: &mut Vec<(String, Vec<usize>, String)>, layer: &str, n: usize| {
        for p in ["gamma", "beta", "mean", "var"] {
            out.push((format!("{layer}.bn.{p}"), vec![n], layer.to_string()));
        }
    };
    for (i, c) in h.conv.iter().enumerate() {
        let layer = format!("conv{}", i + 1);
        out.push((format!("{layer}.weight"), vec![c.out_channels, c.in_channels, c.kernel_length], layer.clone()));
        out.push((format!("{layer}.bias"), vec![c.out_channels], layer.clone()));
        push_bn(&mut out, &layer, c.out_channels);
    }
    for (i, d) in h.dense.iter().enumerate() {
        let layer = format!("dense{}", i + 1);
        out.push((format!("{layer}.weight"), vec![d.out_dim, d.in_dim], layer.clone()));
        out.push((format!("{layer}.bias"), vec![d.out_dim], layer.clone()));
        push_bn(&mut out, &layer, d.out_dim);
    }
    out.push(("output.weight".into(), vec![h.output.out_dim, h.output.in_dim], "output".into()));
    out.push(("output.bias".into(), vec![h.output.out_dim], "output".into()));
    out
}

fn check_tensor_list(h: &WeightHeader) -> Result<(), ModelError> {
    for (i, c) in h.conv.iter().enumerate() {
        let layer = format!("conv{}", i + 1);
        if c.stride != 1 || c.padding != "same" {
            return Err(shape_err(&layer, "only stride 1 with same padding is supported"));
        }
    }
    let expected = expected_tensors(h);
    for (i, (name, shape, layer)) in expected.iter().enumerate() {
        match h.tensors.get(i) {
            Some(t) if &t.name == name && &t.shape == shape => {}
            Some(t) => {
                return Err(shape_err(
                    layer,
                    format!("tensor #{i} is {} {:?}; plan requires {name} {shape:?}", t.name, t.shape),
                ))
            }
            None => return Err(shape_err(layer, format!("missing tensor {name}"))),
        }
    }
    if h.tensors.len() > expected.len() {
        return Err(format_err(format!("unexpected tensor {}", h.tensors[expected.len()].name)));
    }
    Ok(())
}

/// Parses and validates a weight file.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<DecodedModel<T>, ModelError> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(format_err("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let data_start = 12usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| format_err("header truncated"))?;
    let header: WeightHeader =
        serde_json::from_slice(&bytes[12..data_start]).map_err(|e| format_err(format!("header: {e}")))?;
    if header.dtype != "f32" {
        return Err(format_err(format!("unsupported dtype {}", header.dtype)));
    }
    check_tensor_list(&header)?;

    let total: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    let data = &bytes[data_start..];
    if data.len() != total * 4 {
        return Err(format_err(format!("tensor data has {} bytes, header declares {}", data.len(), total * 4)));
    }
    let mut floats = data
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64));
    let mut take = |n: usize| -> Vec<T> { floats.by_ref().take(n).collect() };

    let mut conv = Vec::with_capacity(header.conv.len());
    for c in &header.conv {
        let n = c.out_channels;
        let weight = take(n * c.in_channels * c.kernel_length);
        let bias = take(n);
        let bn = BatchNorm { gamma: take(n), beta: take(n), mean: take(n), var: take(n) };
        conv.push(ConvLayer {
            in_channels: c.in_channels,
            out_channels: n,
            kernel_length: c.kernel_length,
            pool_length: c.pool_length,
            weight,
            bias,
            bn,
        });
    }
    let mut dense = Vec::with_capacity(header.dense.len());
    for d in &header.dense {
        let n = d.out_dim;
        let weight = take(n * d.in_dim);
        let bias = take(n);
        let bn = BatchNorm { gamma: take(n), beta: take(n), mean: take(n), var: take(n) };
        dense.push(DenseLayer { in_dim: d.in_dim, out_dim: n, weight, bias, bn: Some(bn), dropout_rate: d.dropout_rate });
    }
    let o = &header.output;
    let output = DenseLayer {
        in_dim: o.in_dim,
        out_dim: o.out_dim,
        weight: take(o.out_dim * o.in_dim),
        bias: take(o.out_dim),
        bn: None,
        dropout_rate: o.dropout_rate,
    };
    let cnn = CnnModel {
        model_id: header.model_id.clone(),
        input_length: header.input_length,
        input_channels: header.input_channels,
        conv,
        dense,
        output,
        bn_eps: T::of(header.batch_norm_eps),
    };
    cnn.validate()?;

    let ensemble = match (header.kind, header.ensemble) {
        (ModelKind::Cnn, None) => None,
        (ModelKind::Cnn, Some(_)) => return Err(format_err("cnn model carries an ensemble section")),
        (ModelKind::CnnEnsemble, None) => return Err(shape_err("ensemble", "ensemble section missing")),
        (ModelKind::CnnEnsemble, Some(wire)) => {
            let e: TreeEnsemble<T> = wire.into_ensemble(&header.model_id);
            if e.feature_dim != cnn.embedding_dim() {
                return Err(shape_err(
                    "ensemble",
                    format!("ensemble reads {} features, embedding has {}", e.feature_dim, cnn.embedding_dim()),
                ));
            }
            e.validate()?;
            Some(e)
        }
    };
    Ok(DecodedModel { kind: header.kind, cnn, ensemble })
}

/// Header describing `model` (and `ensemble`, if any).
pub fn header_for<T: Scalar>(model: &CnnModel<T>, ensemble: Option<&TreeEnsemble<T>>) -> WeightHeader {
    let mut h = WeightHeader {
        model_id: model.model_id.clone(),
        kind: if ensemble.is_some() { ModelKind::CnnEnsemble } else { ModelKind::Cnn },
        dtype: "f32".into(),
        input_length: model.input_length,
        input_channels: model.input_channels,
        batch_norm_eps: model.bn_eps.as_f64(),
        conv: model
            .conv
            .iter()
            .map(|c| ConvSpec {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel_length: c.kernel_length,
                stride: 1,
                padding: same(),
                pool_length: c.pool_length,
            })
            .collect(),
        dense: model
            .dense
            .iter()
            .map(|d| DenseSpec { in_dim: d.in_dim, out_dim: d.out_dim, dropout_rate: d.dropout_rate })
            .collect(),
        output: DenseSpec { in_dim: model.output.in_dim, out_dim: model.output.out_dim, dropout_rate: 0.0 },
        tensors: Vec::new(),
        ensemble: ensemble.map(EnsembleWire::from_ensemble),
    };
    h.tensors = expected_tensors(&h).into_iter().map(|(name, shape, _)| TensorSpec { name, shape }).collect();
    h
}

/// Encodes with an explicit header. Used to build deliberately inconsistent
/// files in tests; normal callers want [`encode`].
pub fn encode_with_header<T: Scalar>(header: &WeightHeader, model: &CnnModel<T>) -> Vec<u8> {
    let header_json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + header_json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    let mut put = |xs: &[T]| {
        for &x in xs {
            out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    };
    for c in &model.conv {
        put(&c.weight);
        put(&c.bias);
        put(&c.bn.gamma);
        put(&c.bn.beta);
        put(&c.bn.mean);
        put(&c.bn.var);
    }
    for d in &model.dense {
        put(&d.weight);
        put(&d.bias);
        if let Some(bn) = &d.bn {
            put(&bn.gamma);
            put(&bn.beta);
            put(&bn.mean);
            put(&bn.var);
        }
    }
    put(&model.output.weight);
    put(&model.output.bias);
    out
}

pub fn encode<T: Scalar>(model: &CnnModel<T>, ensemble: Option<&TreeEnsemble<T>>) -> Vec<u8> {
    encode_with_header(&header_for(model, ensemble), model)
}

/// Reads the JSON header without touching tensor data.
pub fn read_header(bytes: &[u8]) -> Result<WeightHeader, ModelError> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(format_err("bad magic"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let end = 12usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| format_err("header truncated"))?;
    serde_json::from_slice(&bytes[12..end]).map_err(|e| format_err(format!("header: {e}")))
}

/// Replaces the header of an encoded file, keeping its tensor data.
pub fn replace_header(bytes: &[u8], header: &WeightHeader) -> Result<Vec<u8>, ModelError> {
    let old_len = u32::from_le_bytes(bytes.get(8..12).ok_or_else(|| format_err("truncated"))?.try_into().unwrap()) as usize;
    let data = bytes.get(12 + old_len..).ok_or_else(|| format_err("header truncated"))?;
    let header_json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + header_json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(data);
    Ok(out)
}
