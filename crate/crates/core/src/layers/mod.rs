//! Layer kernels: binarized and int8-input 1D convolutions with fused
//! batchnorm thresholds and fused OR-pooling, standalone max-pooling, and
//! the fixed-point classifier head.

mod conv;
mod fc;
mod pool;
mod probe;
mod threshold;

use thiserror::Error;

pub use conv::{
    conv1d_binary, conv1d_binary_with, conv1d_int8, conv1d_int8_with, BinaryConvLayer, ConvParams, Int8ConvLayer,
    Unroll, MAX_INT8_WINDOW,
};
pub use fc::{fc_scores, fc_scores_with, from_q16, predict, to_q16, BinaryFcLayer, Q16_ONE};
pub use pool::maxpool_binary;
pub(crate) use pool::check_pool;
pub use probe::{NoProbe, OpCounter, Probe};
pub use threshold::{fold_batchnorm_binary, fold_batchnorm_int8, BatchNorm, Direction, ThresholdSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayerError {
    #[error("expected {expected} input channels, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("input has {timesteps} timesteps, kernel needs at least {k}")]
    TooShort { timesteps: usize, k: usize },
    #[error("{what} = {value} is not a power of two")]
    NotPowerOfTwo { what: &'static str, value: usize },
    #[error("expected {expected} per-channel parameters, got {actual}")]
    ThresholdCount { expected: usize, actual: usize },
    #[error("expected {expected} weight words, got {actual}")]
    WeightCount { expected: usize, actual: usize },
    #[error("expected filters of {expected} bits, got {actual}")]
    FilterLength { expected: usize, actual: usize },
    #[error("weight bits past the end of a filter are set")]
    DirtyWeights,
    #[error("pool({k},{s}) unsupported: only kernel == stride")]
    PoolUnsupported { k: usize, s: usize },
    #[error("pool kernel {k} exceeds {timesteps} timesteps")]
    PoolTooLarge { k: usize, timesteps: usize },
    #[error("expected {expected} input bits, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("no scores to choose from")]
    EmptyScores,
    #[error("sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("gamma must be nonzero and finite")]
    ZeroGamma,
    #[error("batchnorm parameters must be finite")]
    NonFinite,
    #[error("int8 window of {0} elements exceeds the 32-bit accumulator bound")]
    AccumulatorBound(usize),
    #[error("zero-sized dimension")]
    ZeroSize,
    #[error("{0} does not fit Q16.16")]
    Q16Range(f64),
}

/// A `(T, C)` tensor of int8 samples in time-major order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Int8Tensor {
    data: Vec<i8>,
    timesteps: usize,
    channels: usize,
}

impl Int8Tensor {
    pub fn new(data: Vec<i8>, timesteps: usize, channels: usize) -> Result<Self, LayerError> {
        if data.len() != timesteps * channels {
            return Err(LayerError::SizeMismatch {
                expected: timesteps * channels,
                actual: data.len(),
            });
        }
        Ok(Self {
            data,
            timesteps,
            channels,
        })
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[i8] {
        &self.data
    }
    pub fn get(&self, t: usize, c: usize) -> i8 {
        self.data[t * self.channels + c]
    }
}
