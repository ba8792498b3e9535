//! Network descriptors, shape validation and the packed forward pass.
//!
//! A [`Network`] keeps its layers in descriptor form, with pooling as
//! separate [`Layer::Pool`] entries the way architectures are usually
//! written (`Conv(2,7), Conv(2,15), Pool(4,4), FC`). At construction each
//! pool is fused into the convolution before it, so execution never
//! materializes an unpooled activation tensor.

mod analysis;
mod arch;
pub mod format;
pub mod json;

use std::fmt;

use thiserror::Error;

use crate::bitpack::{BitError, PackedBitTensor};
use crate::layers::{
    conv1d_binary_with, conv1d_int8_with, fc_scores_with, predict, BinaryConvLayer, BinaryFcLayer, Int8ConvLayer,
    Int8Tensor, LayerError, NoProbe, Probe, Unroll,
};

pub use analysis::{conv_weight_footprint, FootprintReport, LayerFootprint, OpCountReport};
pub use arch::{ArchError, ArchLayer, Architecture};

/// Element type of the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputDomain {
    Int8,
    Binary,
}

impl InputDomain {
    pub fn code(self) -> u8 {
        match self {
            InputDomain::Int8 => 0,
            InputDomain::Binary => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(InputDomain::Int8),
            1 => Some(InputDomain::Binary),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InputSpec {
    pub timesteps: usize,
    pub channels: usize,
    pub domain: InputDomain,
}

/// Non-overlapping max pooling descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PoolLayer {
    pub k: usize,
    pub s: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layer {
    Int8Conv(Int8ConvLayer),
    BinaryConv(BinaryConvLayer),
    Pool(PoolLayer),
    Fc(BinaryFcLayer),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Int8Conv(_) => "int8conv",
            Layer::BinaryConv(_) => "binconv",
            Layer::Pool(_) => "pool",
            Layer::Fc(_) => "fc",
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, Layer::Int8Conv(_) | Layer::BinaryConv(_))
    }
}

/// Activation shape `(T, C)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub timesteps: usize,
    pub channels: usize,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.timesteps, self.channels)
    }
}

/// Output of one descriptor in a validated chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerOutput {
    Activations(Shape),
    Scores(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationKind {
    #[error("network has no layers")]
    Empty,
    #[error("input shape has a zero dimension")]
    EmptyInput,
    #[error("the network must end with exactly one fc layer")]
    MissingFc,
    #[error("fc must be the last layer")]
    FcNotLast,
    #[error("int8 input requires an int8conv first layer")]
    NeedsInt8First,
    #[error("int8conv is only valid as the first layer of an int8-input network")]
    Int8Misplaced,
    #[error("expected {expected} input channels, layer has {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("pool must directly follow a convolution without its own pool")]
    PoolMisplaced,
    #[error("fc expects {actual} input bits, previous layer produces {expected}")]
    FcInputBits { expected: usize, actual: usize },
    #[error(transparent)]
    Layer(#[from] LayerError),
}

/// A validation failure, located at a descriptor index when it has one.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationError {
    pub index: Option<usize>,
    pub kind: ValidationKind,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "layer {i}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

fn at(index: usize, kind: impl Into<ValidationKind>) -> ValidationError {
    ValidationError {
        index: Some(index),
        kind: kind.into(),
    }
}

/// Checks a descriptor list and returns the output of every layer.
pub fn validate(input: &InputSpec, layers: &[Layer]) -> Result<Vec<LayerOutput>, ValidationError> {
    if input.timesteps == 0 || input.channels == 0 {
        return Err(ValidationError {
            index: None,
            kind: ValidationKind::EmptyInput,
        });
    }
    if layers.is_empty() {
        return Err(ValidationError {
            index: None,
            kind: ValidationKind::Empty,
        });
    }
    if let Some(i) = layers[..layers.len() - 1].iter().position(|l| matches!(l, Layer::Fc(_))) {
        return Err(at(i, ValidationKind::FcNotLast));
    }
    if !matches!(layers.last(), Some(Layer::Fc(_))) {
        return Err(at(layers.len() - 1, ValidationKind::MissingFc));
    }
    if input.domain == InputDomain::Int8 && !matches!(layers[0], Layer::Int8Conv(_)) {
        return Err(at(0, ValidationKind::NeedsInt8First));
    }

    let mut shape = Shape {
        timesteps: input.timesteps,
        channels: input.channels,
    };
    let mut chain = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let out = match layer {
            Layer::Int8Conv(l) => {
                if i != 0 || input.domain != InputDomain::Int8 {
                    return Err(at(i, ValidationKind::Int8Misplaced));
                }
                conv_shape(i, shape, l, layers.get(i + 1))?
            }
            Layer::BinaryConv(l) => conv_shape(i, shape, l, layers.get(i + 1))?,
            Layer::Pool(p) => {
                if i == 0 || !layers[i - 1].is_conv() {
                    return Err(at(i, ValidationKind::PoolMisplaced));
                }
                crate::layers::check_pool(shape.timesteps, p.k, p.s).map_err(|e| at(i, e))?;
                Shape {
                    timesteps: shape.timesteps / p.k,
                    ..shape
                }
            }
            Layer::Fc(l) => {
                let bits = shape.timesteps * shape.channels;
                if l.in_bits() != bits {
                    return Err(at(
                        i,
                        ValidationKind::FcInputBits {
                            expected: bits,
                            actual: l.in_bits(),
                        },
                    ));
                }
                chain.push(LayerOutput::Scores(l.n_classes()));
                continue;
            }
        };
        chain.push(LayerOutput::Activations(out));
        shape = out;
    }
    Ok(chain)
}

fn conv_shape(
    i: usize,
    input: Shape,
    layer: &crate::layers::ConvParams,
    next: Option<&Layer>,
) -> Result<Shape, ValidationError> {
    if layer.c_in() != input.channels {
        return Err(at(
            i,
            ValidationKind::ChannelMismatch {
                expected: input.channels,
                actual: layer.c_in(),
            },
        ));
    }
    if layer.fused_pool().is_some() && matches!(next, Some(Layer::Pool(_))) {
        return Err(at(i + 1, ValidationKind::PoolMisplaced));
    }
    let (_, t_out) = layer.output_timesteps(input.timesteps).map_err(|e| at(i, e))?;
    Ok(Shape {
        timesteps: t_out,
        channels: layer.c_out(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Stage {
    Int8(Int8ConvLayer),
    Binary(BinaryConvLayer),
}

/// A network input in the domain the first layer expects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Input {
    Int8(Int8Tensor),
    Binary(PackedBitTensor),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("input is {actual:?}, network expects {expected:?}")]
    Domain { expected: InputDomain, actual: InputDomain },
    #[error("input shape {actual}, network expects {expected}")]
    Shape { expected: Shape, actual: Shape },
    #[error(transparent)]
    Bits(#[from] BitError),
    #[error(transparent)]
    Layer(#[from] LayerError),
}

/// Packed intermediate results: one tensor per conv stage (after its fused
/// pool), then the Q16.16 scores and the predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub stages: Vec<PackedBitTensor>,
    pub scores: Vec<i64>,
    pub class: usize,
}

/// A validated network with parameters, ready to run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    input: InputSpec,
    layers: Vec<Layer>,
    chain: Vec<LayerOutput>,
    stages: Vec<Stage>,
}

impl Network {
    /// Validates the descriptors. Convs built with their own fused pool are
    /// split into conv + pool descriptors so every network has one
    /// canonical descriptor form.
    pub fn new(input: InputSpec, layers: Vec<Layer>) -> Result<Self, ValidationError> {
        let mut canonical = Vec::with_capacity(layers.len());
        for layer in layers {
            let split = match &layer {
                Layer::Int8Conv(l) => l.fused_pool(),
                Layer::BinaryConv(l) => l.fused_pool(),
                _ => None,
            };
            match (layer, split) {
                (layer, None) => canonical.push(layer),
                (Layer::Int8Conv(mut l), Some(p)) => {
                    l.params_mut().set_fused_pool(None);
                    canonical.push(Layer::Int8Conv(l));
                    canonical.push(Layer::Pool(PoolLayer { k: p, s: p }));
                }
                (Layer::BinaryConv(mut l), Some(p)) => {
                    l.params_mut().set_fused_pool(None);
                    canonical.push(Layer::BinaryConv(l));
                    canonical.push(Layer::Pool(PoolLayer { k: p, s: p }));
                }
                _ => unreachable!("only convs carry a pool"),
            }
        }
        let chain = validate(&input, &canonical)?;

        let mut stages = Vec::new();
        for (i, layer) in canonical.iter().enumerate() {
            let pool = match canonical.get(i + 1) {
                Some(Layer::Pool(p)) => Some(p.k),
                _ => None,
            };
            match layer {
                Layer::Int8Conv(l) => {
                    let mut l = l.clone();
                    l.params_mut().set_fused_pool(pool);
                    stages.push(Stage::Int8(l));
                }
                Layer::BinaryConv(l) => {
                    let mut l = l.clone();
                    l.params_mut().set_fused_pool(pool);
                    stages.push(Stage::Binary(l));
                }
                Layer::Pool(_) | Layer::Fc(_) => {}
            }
        }
        Ok(Self {
            input,
            layers: canonical,
            chain,
            stages,
        })
    }

    pub fn input(&self) -> &InputSpec {
        &self.input
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Output of each descriptor.
    pub fn chain(&self) -> &[LayerOutput] {
        &self.chain
    }

    pub fn fc(&self) -> &BinaryFcLayer {
        match self.layers.last() {
            Some(Layer::Fc(fc)) => fc,
            _ => unreachable!("validated networks end in fc"),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.fc().n_classes()
    }

    /// Number of values in one input window.
    pub fn input_len(&self) -> usize {
        self.input.timesteps * self.input.channels
    }

    /// Shape of the tensor fed to each descriptor.
    pub fn input_shapes(&self) -> Vec<Shape> {
        let mut shape = Shape {
            timesteps: self.input.timesteps,
            channels: self.input.channels,
        };
        let mut shapes = Vec::with_capacity(self.chain.len());
        for out in &self.chain {
            shapes.push(shape);
            if let LayerOutput::Activations(s) = out {
                shape = *s;
            }
        }
        shapes
    }

    /// Builds an input from time-major int8 values. For binary networks the
    /// values must be -1 or +1.
    pub fn make_input(&self, values: &[i8]) -> Result<Input, InferenceError> {
        let (t, c) = (self.input.timesteps, self.input.channels);
        match self.input.domain {
            InputDomain::Int8 => Ok(Input::Int8(Int8Tensor::new(values.to_vec(), t, c)?)),
            InputDomain::Binary => Ok(Input::Binary(PackedBitTensor::pack(values, t, c)?)),
        }
    }

    pub fn forward(&self, input: &Input) -> Result<Trace, InferenceError> {
        self.forward_with(input, Unroll::default(), &mut NoProbe)
    }

    /// Classifies one time-major window.
    pub fn classify(&self, values: &[i8]) -> Result<Trace, InferenceError> {
        self.forward(&self.make_input(values)?)
    }

    pub fn forward_with<P: Probe>(&self, input: &Input, unroll: Unroll, probe: &mut P) -> Result<Trace, InferenceError> {
        let expected = Shape {
            timesteps: self.input.timesteps,
            channels: self.input.channels,
        };
        let (actual_domain, actual) = match input {
            Input::Int8(x) => (InputDomain::Int8, Shape { timesteps: x.timesteps(), channels: x.channels() }),
            Input::Binary(x) => (InputDomain::Binary, Shape { timesteps: x.timesteps(), channels: x.channels() }),
        };
        if actual_domain != self.input.domain {
            return Err(InferenceError::Domain {
                expected: self.input.domain,
                actual: actual_domain,
            });
        }
        if actual != expected {
            return Err(InferenceError::Shape { expected, actual });
        }

        let mut stages: Vec<PackedBitTensor> = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let out = match (stage, stages.last(), input) {
                (Stage::Int8(l), None, Input::Int8(x)) => conv1d_int8_with(x, l, probe)?,
                (Stage::Binary(l), None, Input::Binary(x)) => conv1d_binary_with(x, l, unroll, probe)?,
                (Stage::Binary(l), Some(prev), _) => conv1d_binary_with(prev, l, unroll, probe)?,
                _ => unreachable!("stage order is validated"),
            };
            stages.push(out);
        }
        let scores = match (stages.last(), input) {
            (Some(x), _) | (None, Input::Binary(x)) => fc_scores_with(x, self.fc(), probe)?,
            (None, Input::Int8(_)) => unreachable!("int8 networks start with a conv"),
        };
        let class = predict(&scores)?;
        Ok(Trace { stages, scores, class })
    }

    /// Replaces threshold `channel` of descriptor `index` with its
    /// complement. Used to check that verification catches corrupted
    /// parameters; returns false if the descriptor has no such threshold.
    pub fn corrupt_threshold(&mut self, index: usize, channel: usize) -> bool {
        let flip = |th: &mut [crate::layers::ThresholdSpec]| match th.get_mut(channel) {
            Some(t) => {
                *t = t.complement();
                true
            }
            None => false,
        };
        let ok = match self.layers.get_mut(index) {
            Some(Layer::Int8Conv(l)) => flip(l.params_mut().thresholds_mut()),
            Some(Layer::BinaryConv(l)) => flip(l.params_mut().thresholds_mut()),
            _ => false,
        };
        if ok {
            let layers = std::mem::take(&mut self.layers);
            *self = Network::new(self.input, layers).expect("thresholds do not affect validity");
        }
        ok
    }
}
