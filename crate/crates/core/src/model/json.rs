//! JSON interchange with the training side, and the evaluation manifest.
//!
//! Packed words travel as base64 of little-endian `u32`s, in the same
//! MSB-first layout the binary format uses.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{InputDomain, InputSpec, Layer, Network, PoolLayer, ValidationError};
use crate::layers::{BinaryConvLayer, BinaryFcLayer, Direction, Int8ConvLayer, LayerError, ThresholdSpec};

pub const MODEL_FORMAT: &str = "ubnn-model";
pub const MANIFEST_FORMAT: &str = "ubnn-manifest";
pub const JSON_VERSION: u32 = 1;

/// A JSON document failed to parse or describes an invalid object. `path`
/// names the offending field, e.g. `layers[2].weights`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct JsonError {
    pub path: String,
    pub message: String,
}

impl JsonError {
    pub(crate) fn at(path: impl Into<String>, message: impl ToString) -> Self {
        let path = path.into();
        Self {
            path: if path.is_empty() { ".".into() } else { path },
            message: message.to_string(),
        }
    }
}

impl From<ValidationError> for JsonError {
    fn from(e: ValidationError) -> Self {
        let path = e.index.map(|i| format!("layers[{i}]")).unwrap_or_default();
        JsonError::at(path, e.kind)
    }
}

/// Deserializes with the path of the first bad field in the error.
pub(crate) fn parse<T: DeserializeOwned>(text: &str) -> Result<T, JsonError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| JsonError::at(e.path().to_string(), e.inner()))
}

pub(crate) fn check_header(format: &str, version: u32, expected: &str) -> Result<(), JsonError> {
    if format != expected {
        return Err(JsonError::at("format", format!("expected \"{expected}\", found \"{format}\"")));
    }
    if version != JSON_VERSION {
        return Err(JsonError::at("version", format!("unsupported version {version}")));
    }
    Ok(())
}

pub(crate) fn encode_words(words: &[u32]) -> String {
    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
    B64.encode(bytes)
}

pub(crate) fn decode_bytes(path: &str, text: &str) -> Result<Vec<u8>, JsonError> {
    B64.decode(text).map_err(|e| JsonError::at(path, format!("bad base64: {e}")))
}

pub(crate) fn decode_words(path: &str, text: &str) -> Result<Vec<u32>, JsonError> {
    let bytes = decode_bytes(path, text)?;
    if bytes.len() % 4 != 0 {
        return Err(JsonError::at(path, format!("{} bytes is not a whole number of words", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DomainDoc {
    Int8,
    Binary,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputDoc {
    timesteps: usize,
    channels: usize,
    domain: DomainDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdDoc {
    threshold: i32,
    direction: Direction,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvDoc {
    #[serde(rename = "type", skip_serializing)]
    _kind: Option<String>,
    c_out: usize,
    k: usize,
    thresholds: Vec<ThresholdDoc>,
    weights: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FcDoc {
    #[serde(rename = "type", skip_serializing)]
    _kind: Option<String>,
    n_classes: usize,
    score_scale: Vec<i32>,
    score_bias: Vec<i32>,
    weights: String,
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LayerDoc {
    Int8conv(ConvDoc),
    Binconv(ConvDoc),
    Pool { k: usize, s: usize },
    Fc(FcDoc),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc<L> {
    format: String,
    version: u32,
    input: InputDoc,
    layers: Vec<L>,
}

#[derive(Debug, Deserialize)]
struct TypeTag {
    #[serde(rename = "type")]
    kind: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolDoc {
    #[serde(rename = "type")]
    _kind: String,
    k: usize,
    s: usize,
}

// Layers are parsed one at a time so errors keep the full field path.
fn parse_layer(i: usize, value: serde_json::Value) -> Result<LayerDoc, JsonError> {
    fn field<T: DeserializeOwned>(i: usize, value: serde_json::Value) -> Result<T, JsonError> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let inner = e.path().to_string();
            let path = if inner == "." { format!("layers[{i}]") } else { format!("layers[{i}].{inner}") };
            JsonError::at(path, e.inner())
        })
    }
    let tag: TypeTag = field(i, value.clone())?;
    Ok(match tag.kind.as_str() {
        "int8conv" => LayerDoc::Int8conv(field(i, value)?),
        "binconv" => LayerDoc::Binconv(field(i, value)?),
        "pool" => {
            let p: PoolDoc = field(i, value)?;
            LayerDoc::Pool { k: p.k, s: p.s }
        }
        "fc" => LayerDoc::Fc(field(i, value)?),
        other => {
            return Err(JsonError::at(
                format!("layers[{i}].type"),
                format!("unknown layer type `{other}`, expected int8conv, binconv, pool or fc"),
            ))
        }
    })
}

fn conv_doc(l: &crate::layers::ConvParams) -> ConvDoc {
    ConvDoc {
        _kind: None,
        c_out: l.c_out(),
        k: l.k(),
        thresholds: l
            .thresholds()
            .iter()
            .map(|t| ThresholdDoc {
                threshold: t.threshold,
                direction: t.direction,
            })
            .collect(),
        weights: encode_words(l.weight_words()),
    }
}

/// Renders a network as pretty-printed interchange JSON.
pub fn to_json(net: &Network) -> String {
    let doc = ModelDoc {
        format: MODEL_FORMAT.into(),
        version: JSON_VERSION,
        input: InputDoc {
            timesteps: net.input.timesteps,
            channels: net.input.channels,
            domain: match net.input.domain {
                InputDomain::Int8 => DomainDoc::Int8,
                InputDomain::Binary => DomainDoc::Binary,
            },
        },
        layers: net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Int8Conv(c) => LayerDoc::Int8conv(conv_doc(c)),
                Layer::BinaryConv(c) => LayerDoc::Binconv(conv_doc(c)),
                Layer::Pool(p) => LayerDoc::Pool { k: p.k, s: p.s },
                Layer::Fc(f) => LayerDoc::Fc(FcDoc {
                    _kind: None,
                    n_classes: f.n_classes(),
                    score_scale: f.score_scale().to_vec(),
                    score_bias: f.score_bias().to_vec(),
                    weights: encode_words(f.weight_words()),
                }),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("model document serializes")
}

/// Parses and validates interchange JSON.
pub fn from_json(text: &str) -> Result<Network, JsonError> {
    let doc: ModelDoc<serde_json::Value> = parse(text)?;
    check_header(&doc.format, doc.version, MODEL_FORMAT)?;
    let input = InputSpec {
        timesteps: doc.input.timesteps,
        channels: doc.input.channels,
        domain: match doc.input.domain {
            DomainDoc::Int8 => InputDomain::Int8,
            DomainDoc::Binary => InputDomain::Binary,
        },
    };
    let (mut t, mut c) = (input.timesteps, input.channels);
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (i, layer) in doc.layers.into_iter().enumerate() {
        let layer = parse_layer(i, layer)?;
        let path = |field: &str| format!("layers[{i}].{field}");
        let built = match layer {
            LayerDoc::Int8conv(d) => {
                let (w, th) = conv_parts(&d, &path)?;
                let l = Int8ConvLayer::new(c, d.c_out, d.k, w, th, None).map_err(|e| JsonError::at(path(conv_field(&e)), e))?;
                t = (t + 1).saturating_sub(d.k);
                c = d.c_out;
                Layer::Int8Conv(l)
            }
            LayerDoc::Binconv(d) => {
                let (w, th) = conv_parts(&d, &path)?;
                let l = BinaryConvLayer::new(c, d.c_out, d.k, w, th, None).map_err(|e| JsonError::at(path(conv_field(&e)), e))?;
                t = (t + 1).saturating_sub(d.k);
                c = d.c_out;
                Layer::BinaryConv(l)
            }
            LayerDoc::Pool { k, s } => {
                if let Some(q) = t.checked_div(k) {
                    t = q;
                }
                Layer::Pool(PoolLayer { k, s })
            }
            LayerDoc::Fc(d) => {
                let weights = decode_words(&path("weights"), &d.weights)?;
                if d.score_scale.len() != d.n_classes {
                    return Err(JsonError::at(path("score_scale"), format!("expected {} entries, found {}", d.n_classes, d.score_scale.len())));
                }
                if d.score_bias.len() != d.n_classes {
                    return Err(JsonError::at(path("score_bias"), format!("expected {} entries, found {}", d.n_classes, d.score_bias.len())));
                }
                let l = BinaryFcLayer::new(t * c, d.n_classes, weights, d.score_scale, d.score_bias)
                    .map_err(|e| JsonError::at(path("weights"), e))?;
                Layer::Fc(l)
            }
        };
        layers.push(built);
    }
    Ok(Network::new(input, layers)?)
}

fn conv_field(e: &LayerError) -> &'static str {
    match e {
        LayerError::WeightCount { .. } | LayerError::DirtyWeights | LayerError::FilterLength { .. } => "weights",
        LayerError::ThresholdCount { .. } => "thresholds",
        LayerError::TooShort { .. } => "k",
        _ => "c_out",
    }
}

fn conv_parts(d: &ConvDoc, path: &dyn Fn(&str) -> String) -> Result<(Vec<u32>, Vec<ThresholdSpec>), JsonError> {
    if !d.c_out.is_power_of_two() {
        return Err(JsonError::at(path("c_out"), LayerError::NotPowerOfTwo { what: "c_out", value: d.c_out }));
    }
    if d.thresholds.len() != d.c_out {
        return Err(JsonError::at(path("thresholds"), format!("expected {} entries, found {}", d.c_out, d.thresholds.len())));
    }
    let weights = decode_words(&path("weights"), &d.weights)?;
    let thresholds = d
        .thresholds
        .iter()
        .map(|t| ThresholdSpec {
            threshold: t.threshold,
            direction: t.direction,
        })
        .collect();
    Ok((weights, thresholds))
}

/// Which predictor a manifest exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifestKind {
    Bnn,
    Rf,
}

/// Element type of the manifest inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifestDtype {
    I8,
    I32,
}

impl ManifestDtype {
    fn width(self) -> usize {
        match self {
            ManifestDtype::I8 => 1,
            ManifestDtype::I32 => 4,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    format: String,
    version: u32,
    kind: ManifestKind,
    dtype: ManifestDtype,
    row_len: usize,
    #[serde(default)]
    raw: bool,
    inputs: String,
    expected: Vec<usize>,
}

/// Inputs and reference predictions produced by the trainer, used to check
/// that this runtime agrees with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub kind: ManifestKind,
    pub dtype: ManifestDtype,
    pub row_len: usize,
    /// Forest inputs are raw accelerometer windows rather than features.
    pub raw: bool,
    /// Row-major, `expected.len()` rows of `row_len` values.
    pub inputs: Vec<i32>,
    pub expected: Vec<usize>,
}

impl Manifest {
    pub fn rows(&self) -> impl Iterator<Item = &[i32]> {
        self.inputs.chunks_exact(self.row_len.max(1))
    }

    pub fn to_json(&self) -> String {
        let bytes: Vec<u8> = match self.dtype {
            ManifestDtype::I8 => self.inputs.iter().map(|&v| v as i8 as u8).collect(),
            ManifestDtype::I32 => self.inputs.iter().flat_map(|v| v.to_le_bytes()).collect(),
        };
        let doc = ManifestDoc {
            format: MANIFEST_FORMAT.into(),
            version: JSON_VERSION,
            kind: self.kind,
            dtype: self.dtype,
            row_len: self.row_len,
            raw: self.raw,
            inputs: B64.encode(bytes),
            expected: self.expected.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, JsonError> {
        let doc: ManifestDoc = parse(text)?;
        check_header(&doc.format, doc.version, MANIFEST_FORMAT)?;
        if doc.row_len == 0 {
            return Err(JsonError::at("row_len", "must be positive"));
        }
        let bytes = decode_bytes("inputs", &doc.inputs)?;
        let width = doc.dtype.width();
        let expected_len = doc.expected.len() * doc.row_len * width;
        if bytes.len() != expected_len {
            return Err(JsonError::at(
                "inputs",
                format!("{} bytes, expected {} rows x {} values x {width} bytes", bytes.len(), doc.expected.len(), doc.row_len),
            ));
        }
        let inputs = match doc.dtype {
            ManifestDtype::I8 => bytes.iter().map(|&b| b as i8 as i32).collect(),
            ManifestDtype::I32 => bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect(),
        };
        Ok(Manifest {
            kind: doc.kind,
            dtype: doc.dtype,
            row_len: doc.row_len,
            raw: doc.raw,
            inputs,
            expected: doc.expected,
        })
    }
}
