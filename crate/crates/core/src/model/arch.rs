use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{InputDomain, InputSpec, Layer, LayerOutput, Network, PoolLayer, ValidationError};
use crate::bitpack::words_for;
use crate::layers::{BinaryConvLayer, BinaryFcLayer, Int8ConvLayer, ThresholdSpec};

/// One entry of an architecture string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchLayer {
    /// `Conv(C_out, K)`
    Conv { c_out: usize, k: usize },
    /// `Pool(K, S)`
    Pool { k: usize, s: usize },
    /// `FC`, with as many outputs as classes
    Fc,
}

/// A layer sequence such as `Conv(2,7), Conv(2,15), Pool(4,4), FC`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Architecture(pub Vec<ArchLayer>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArchError {
    #[error("empty architecture")]
    Empty,
    #[error("cannot parse `{0}`")]
    Syntax(String),
}

impl FromStr for Architecture {
    type Err = ArchError;

    fn from_str(s: &str) -> Result<Self, ArchError> {
        if s.trim().is_empty() {
            return Err(ArchError::Empty);
        }
        let mut items = Vec::new();
        let (mut depth, mut start) = (0usize, 0);
        for (i, ch) in s.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => depth = depth.checked_sub(1).ok_or_else(|| ArchError::Syntax(s.to_string()))?,
                ',' if depth == 0 => {
                    items.push(&s[start..i]);
                    start = i + 1;
                }
                _ => {}
            }
        }
        items.push(&s[start..]);
        let layers = items.iter().map(|item| parse_item(item.trim())).collect::<Result<_, _>>()?;
        Ok(Architecture(layers))
    }
}

fn parse_item(item: &str) -> Result<ArchLayer, ArchError> {
    let bad = || ArchError::Syntax(item.to_string());
    if item.eq_ignore_ascii_case("fc") {
        return Ok(ArchLayer::Fc);
    }
    let open = item.find('(').ok_or_else(bad)?;
    let args = item[open + 1..].strip_suffix(')').ok_or_else(bad)?;
    let nums: Vec<usize> = args
        .split(',')
        .map(|a| a.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [a, b] = nums[..] else { return Err(bad()) };
    match item[..open].trim().to_ascii_lowercase().as_str() {
        "conv" => Ok(ArchLayer::Conv { c_out: a, k: b }),
        "pool" => Ok(ArchLayer::Pool { k: a, s: b }),
        _ => Err(bad()),
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, layer) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match layer {
                ArchLayer::Conv { c_out, k } => write!(f, "Conv({c_out},{k})")?,
                ArchLayer::Pool { k, s } => write!(f, "Pool({k},{s})")?,
                ArchLayer::Fc => f.write_str("FC")?,
            }
        }
        Ok(())
    }
}

impl Architecture {
    /// Instantiates the architecture with all-zero weights and thresholds,
    /// producing the descriptor list a trained model of this shape would
    /// have. The first conv consumes int8 when the input domain is int8.
    pub fn instantiate(&self, input: InputSpec, n_classes: usize) -> Result<Network, ValidationError> {
        self.instantiate_with(input, n_classes, |_, n_bits, count| (vec![0; count * words_for(n_bits)], vec![ThresholdSpec::geq(0); count]))
    }

    /// Like [`Architecture::instantiate`], asking `params(layer_index,
    /// bits_per_filter, n_filters)` for each conv's packed weights and
    /// thresholds. FC rows are zero with unit scale.
    pub fn instantiate_with(
        &self,
        input: InputSpec,
        n_classes: usize,
        mut params: impl FnMut(usize, usize, usize) -> (Vec<u32>, Vec<ThresholdSpec>),
    ) -> Result<Network, ValidationError> {
        let mut layers = Vec::with_capacity(self.0.len());
        let mut shape = (input.timesteps, input.channels);
        let err = |index: usize, kind: super::ValidationKind| ValidationError { index: Some(index), kind };
        for (i, layer) in self.0.iter().enumerate() {
            match *layer {
                ArchLayer::Conv { c_out, k } => {
                    let c_in = shape.1;
                    let (weights, thresholds) = params(i, k * c_in, c_out);
                    let l = if i == 0 && input.domain == InputDomain::Int8 {
                        Layer::Int8Conv(Int8ConvLayer::new(c_in, c_out, k, weights, thresholds, None).map_err(|e| err(i, e.into()))?)
                    } else {
                        Layer::BinaryConv(BinaryConvLayer::new(c_in, c_out, k, weights, thresholds, None).map_err(|e| err(i, e.into()))?)
                    };
                    if shape.0 < k {
                        return Err(err(i, crate::layers::LayerError::TooShort { timesteps: shape.0, k }.into()));
                    }
                    shape = (shape.0 - k + 1, c_out);
                    layers.push(l);
                }
                ArchLayer::Pool { k, s } => {
                    crate::layers::check_pool(shape.0, k, s).map_err(|e| err(i, e.into()))?;
                    shape.0 /= k;
                    layers.push(Layer::Pool(PoolLayer { k, s }));
                }
                ArchLayer::Fc => {
                    let in_bits = shape.0 * shape.1;
                    let fc = BinaryFcLayer::new(
                        in_bits,
                        n_classes,
                        vec![0; n_classes * words_for(in_bits)],
                        vec![crate::layers::Q16_ONE; n_classes],
                        vec![0; n_classes],
                    )
                    .map_err(|e| err(i, e.into()))?;
                    layers.push(Layer::Fc(fc));
                }
            }
        }
        Network::new(input, layers)
    }

    /// Shape chain of the architecture on `input`, or the first violation.
    pub fn validate(&self, input: InputSpec, n_classes: usize) -> Result<Vec<LayerOutput>, ValidationError> {
        self.instantiate(input, n_classes).map(|n| n.chain().to_vec())
    }
}

impl Network {
    /// The architecture string of this network.
    pub fn architecture(&self) -> Architecture {
        Architecture(
            self.layers
                .iter()
                .map(|l| match l {
                    Layer::Int8Conv(c) => ArchLayer::Conv { c_out: c.c_out(), k: c.k() },
                    Layer::BinaryConv(c) => ArchLayer::Conv { c_out: c.c_out(), k: c.k() },
                    Layer::Pool(p) => ArchLayer::Pool { k: p.k, s: p.s },
                    Layer::Fc(_) => ArchLayer::Fc,
                })
                .collect(),
        )
    }
}
