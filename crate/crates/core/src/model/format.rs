//! The `UBN1` binary network format.
//!
//! All multi-byte fields are little-endian.
//!
//! ```text
//! header:  "UBN1"  version:u16  T:u16  C:u16  domain:u8  n_layers:u16
//! layer:   type:u8  c_out:u16  k:u16  [pool_s:u16 if pool]  fused:u8
//!          conv: c_out x (threshold:i32 direction:u8)
//!          fc:   n_classes x (scale:i32 bias:i32)      (Q16.16)
//!          conv: c_out x ceil(K*C_in/32) weight words:u32
//!          fc:   n_classes x ceil(in_bits/32) weight words:u32
//! ```
//!
//! `type` is 0 int8conv, 1 binconv, 2 pool, 3 fc. For pool records `c_out`
//! is 0 and `k` is the pool kernel; for fc records `c_out` is the class
//! count and `k` is 0. `fused` is 1 on a conv exactly when the next record
//! is a pool, and 0 everywhere else. Input channels and fc input bits are
//! implied by the preceding records. Weight words are MSB-first with each
//! filter starting on a word boundary.

use std::io;
use std::path::Path;

use thiserror::Error;

use super::{InputDomain, InputSpec, Layer, Network, PoolLayer, ValidationError};
use crate::bitpack::words_for;
use crate::layers::{BinaryConvLayer, BinaryFcLayer, Direction, Int8ConvLayer, LayerError, ThresholdSpec};

pub const MAGIC: [u8; 4] = *b"UBN1";
pub const VERSION: u16 = 1;

const TYPE_INT8_CONV: u8 = 0;
const TYPE_BIN_CONV: u8 = 1;
const TYPE_POOL: u8 = 2;
const TYPE_FC: u8 = 3;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} unexpected bytes after the last record")]
    TrailingBytes(usize),
    #[error("invalid {field} code {value} at offset {offset}")]
    BadCode { field: &'static str, value: u32, offset: usize },
    #[error("layer {index}: field `{field}` must be {expected}, found {found}")]
    Reserved {
        index: usize,
        field: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("layer {index}: {source}")]
    Layer { index: usize, source: LayerError },
    #[error("invalid network: {0}")]
    Invalid(#[from] ValidationError),
    #[error("invalid forest: {0}")]
    Forest(#[from] crate::rf::RfError),
    #[error("{what} = {value} does not fit the format")]
    TooLarge { what: &'static str, value: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl FormatError {
    /// Stable numeric code for each failure class.
    pub fn code(&self) -> u32 {
        match self {
            FormatError::BadMagic(_) => 1,
            FormatError::UnsupportedVersion(_) => 2,
            FormatError::Truncated { .. } => 3,
            FormatError::TrailingBytes(_) => 4,
            FormatError::BadCode { .. } => 5,
            FormatError::Reserved { .. } => 6,
            FormatError::Layer { .. } | FormatError::Invalid(_) | FormatError::Forest(_) => 7,
            FormatError::TooLarge { .. } => 8,
            FormatError::Io(_) => 9,
        }
    }
}

/// Little-endian cursor that reports truncation with its offset.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if n > self.remaining() {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    /// Fails early when `count * size` bytes cannot possibly follow.
    pub(crate) fn expect(&self, count: usize, size: usize) -> Result<(), FormatError> {
        match count.checked_mul(size) {
            Some(n) if n <= self.remaining() => Ok(()),
            _ => Err(FormatError::Truncated {
                offset: self.pos,
                needed: count.saturating_mul(size),
            }),
        }
    }

    pub(crate) fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }
    pub(crate) fn i8(&mut self) -> Result<i8, FormatError> {
        Ok(self.take(1)?[0] as i8)
    }
    pub(crate) fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    pub(crate) fn i16(&mut self) -> Result<i16, FormatError> {
        Ok(i16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub(crate) fn i32(&mut self) -> Result<i32, FormatError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub(crate) fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub(crate) fn words(&mut self, n: usize) -> Result<Vec<u32>, FormatError> {
        self.expect(n, 4)?;
        (0..n).map(|_| self.u32()).collect()
    }
}

pub(crate) fn u16_field(what: &'static str, value: usize) -> Result<u16, FormatError> {
    u16::try_from(value).map_err(|_| FormatError::TooLarge { what, value })
}

/// Serializes a network.
pub fn to_bytes(net: &Network) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u16_field("timesteps", net.input.timesteps)?.to_le_bytes());
    out.extend_from_slice(&u16_field("channels", net.input.channels)?.to_le_bytes());
    out.push(net.input.domain.code());
    out.extend_from_slice(&u16_field("layer count", net.layers.len())?.to_le_bytes());

    for (i, layer) in net.layers.iter().enumerate() {
        let fused = matches!(net.layers.get(i + 1), Some(Layer::Pool(_))) as u8;
        match layer {
            Layer::Int8Conv(l) => write_conv(&mut out, TYPE_INT8_CONV, l, fused)?,
            Layer::BinaryConv(l) => write_conv(&mut out, TYPE_BIN_CONV, l, fused)?,
            Layer::Pool(p) => {
                out.push(TYPE_POOL);
                out.extend_from_slice(&0u16.to_le_bytes());
                out.extend_from_slice(&u16_field("pool kernel", p.k)?.to_le_bytes());
                out.extend_from_slice(&u16_field("pool stride", p.s)?.to_le_bytes());
                out.push(0);
            }
            Layer::Fc(l) => {
                out.push(TYPE_FC);
                out.extend_from_slice(&u16_field("classes", l.n_classes())?.to_le_bytes());
                out.extend_from_slice(&0u16.to_le_bytes());
                out.push(0);
                for (s, b) in l.score_scale().iter().zip(l.score_bias()) {
                    out.extend_from_slice(&s.to_le_bytes());
                    out.extend_from_slice(&b.to_le_bytes());
                }
                for w in l.weight_words() {
                    out.extend_from_slice(&w.to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

fn write_conv(out: &mut Vec<u8>, ty: u8, l: &crate::layers::ConvParams, fused: u8) -> Result<(), FormatError> {
    out.push(ty);
    out.extend_from_slice(&u16_field("c_out", l.c_out())?.to_le_bytes());
    out.extend_from_slice(&u16_field("kernel", l.k())?.to_le_bytes());
    out.push(fused);
    for th in l.thresholds() {
        out.extend_from_slice(&th.threshold.to_le_bytes());
        out.push(th.direction.code());
    }
    for w in l.weight_words() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    Ok(())
}

/// Parses and validates a network. Never returns a partially read or
/// invalid network.
pub fn from_bytes(bytes: &[u8]) -> Result<Network, FormatError> {
    let mut r = Reader::new(bytes);
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let timesteps = r.u16()? as usize;
    let channels = r.u16()? as usize;
    let offset = r.pos();
    let code = r.u8()?;
    let domain = InputDomain::from_code(code).ok_or(FormatError::BadCode {
        field: "input domain",
        value: code as u32,
        offset,
    })?;
    let n_layers = r.u16()? as usize;
    let input = InputSpec {
        timesteps,
        channels,
        domain,
    };

    // shape implied by the records read so far
    let (mut t, mut c) = (timesteps, channels);
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    let mut fused_flags = Vec::with_capacity(n_layers.min(1024));
    for index in 0..n_layers {
        let offset = r.pos();
        let ty = r.u8()?;
        let count = r.u16()? as usize;
        let k = r.u16()? as usize;
        let layer_err = |source| FormatError::Layer { index, source };
        let layer = match ty {
            TYPE_INT8_CONV | TYPE_BIN_CONV => {
                let fused = r.u8()?;
                fused_flags.push((index, fused));
                r.expect(count, 5)?;
                let mut thresholds = Vec::with_capacity(count);
                for _ in 0..count {
                    let threshold = r.i32()?;
                    let offset = r.pos();
                    let d = r.u8()?;
                    let direction = Direction::from_code(d).ok_or(FormatError::BadCode {
                        field: "threshold direction",
                        value: d as u32,
                        offset,
                    })?;
                    thresholds.push(ThresholdSpec { threshold, direction });
                }
                let n_words = count
                    .checked_mul(words_for(k.saturating_mul(c)))
                    .ok_or(FormatError::Truncated { offset: r.pos(), needed: usize::MAX })?;
                let weights = r.words(n_words)?;
                let layer = if ty == TYPE_INT8_CONV {
                    Layer::Int8Conv(Int8ConvLayer::new(c, count, k, weights, thresholds, None).map_err(layer_err)?)
                } else {
                    Layer::BinaryConv(BinaryConvLayer::new(c, count, k, weights, thresholds, None).map_err(layer_err)?)
                };
                t = (t + 1).saturating_sub(k);
                c = count;
                layer
            }
            TYPE_POOL => {
                let s = r.u16()? as usize;
                let fused = r.u8()?;
                if count != 0 {
                    return Err(FormatError::Reserved { index, field: "c_out", expected: 0, found: count as u32 });
                }
                if fused != 0 {
                    return Err(FormatError::Reserved { index, field: "fused", expected: 0, found: fused as u32 });
                }
                if let Some(q) = t.checked_div(k) {
                    t = q;
                }
                Layer::Pool(PoolLayer { k, s })
            }
            TYPE_FC => {
                let fused = r.u8()?;
                if k != 0 {
                    return Err(FormatError::Reserved { index, field: "k", expected: 0, found: k as u32 });
                }
                if fused != 0 {
                    return Err(FormatError::Reserved { index, field: "fused", expected: 0, found: fused as u32 });
                }
                r.expect(count, 8)?;
                let mut scale = Vec::with_capacity(count);
                let mut bias = Vec::with_capacity(count);
                for _ in 0..count {
                    scale.push(r.i32()?);
                    bias.push(r.i32()?);
                }
                let in_bits = t * c;
                let weights = r.words(count * words_for(in_bits))?;
                Layer::Fc(BinaryFcLayer::new(in_bits, count, weights, scale, bias).map_err(layer_err)?)
            }
            other => {
                return Err(FormatError::BadCode {
                    field: "layer type",
                    value: other as u32,
                    offset,
                })
            }
        };
        layers.push(layer);
    }
    if r.remaining() > 0 {
        return Err(FormatError::TrailingBytes(r.remaining()));
    }
    for (index, fused) in fused_flags {
        let expected = matches!(layers.get(index + 1), Some(Layer::Pool(_))) as u8;
        if fused != expected {
            return Err(FormatError::Reserved {
                index,
                field: "fused",
                expected: expected as u32,
                found: fused as u32,
            });
        }
    }
    let net = Network::new(input, layers)?;
    debug_assert_eq!(net.layers.len(), n_layers, "loaded descriptors are canonical");
    Ok(net)
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<(), FormatError> {
    std::fs::write(path, to_bytes(net)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Network, FormatError> {
    from_bytes(&std::fs::read(path)?)
}
