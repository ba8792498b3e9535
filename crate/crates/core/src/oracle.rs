//! Reference semantics in plain integer and floating-point arithmetic.
//!
//! Nothing here uses XNOR, popcount or packed words. Parameters coming from
//! a packed [`Network`] are read one bit at a time by index. These functions
//! are the ground truth the packed kernels are tested against, and they are
//! slow on purpose.

use thiserror::Error;

use crate::layers::{from_q16, BatchNorm, Direction, ThresholdSpec};
use crate::model::{InputDomain, Layer, Network};
use crate::rf::Forest;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("value {0} outside the tensor's domain")]
    Domain(i64),
}

/// Element kind held by a [`DenseTensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    PmOne,
    Int8,
    /// Unbounded integers, e.g. convolution accumulators.
    Integer,
}

/// Unpacked `(T, C)` tensor, time-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseTensor {
    pub timesteps: usize,
    pub channels: usize,
    pub data: Vec<i64>,
    pub domain: Domain,
}

impl DenseTensor {
    pub fn new(timesteps: usize, channels: usize, data: Vec<i64>, domain: Domain) -> Result<Self, OracleError> {
        if data.len() != timesteps * channels {
            return Err(OracleError::Shape(format!(
                "{} values for a {timesteps}x{channels} tensor",
                data.len()
            )));
        }
        let ok = |v: i64| match domain {
            Domain::PmOne => v == 1 || v == -1,
            Domain::Int8 => (-128..=127).contains(&v),
            Domain::Integer => true,
        };
        if let Some(&bad) = data.iter().find(|&&v| !ok(v)) {
            return Err(OracleError::Domain(bad));
        }
        Ok(Self {
            timesteps,
            channels,
            data,
            domain,
        })
    }

    pub fn at(&self, t: usize, c: usize) -> i64 {
        self.data[t * self.channels + c]
    }
}

/// Filters indexed `(m, k, c)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseFilters {
    pub c_out: usize,
    pub k: usize,
    pub c_in: usize,
    pub data: Vec<i64>,
}

impl DenseFilters {
    pub fn at(&self, m: usize, k: usize, c: usize) -> i64 {
        self.data[(m * self.k + k) * self.c_in + c]
    }
}

/// `y(t, m) = sum_k sum_c w(m, k, c) * x(t + k, c)`, stride 1, no padding.
pub fn conv1d_reference(x: &DenseTensor, w: &DenseFilters) -> Result<DenseTensor, OracleError> {
    if x.channels != w.c_in {
        return Err(OracleError::Shape(format!("input has {} channels, filters expect {}", x.channels, w.c_in)));
    }
    if x.timesteps < w.k {
        return Err(OracleError::Shape(format!("{} timesteps shorter than kernel {}", x.timesteps, w.k)));
    }
    let t_out = x.timesteps - w.k + 1;
    let mut data = Vec::with_capacity(t_out * w.c_out);
    for t in 0..t_out {
        for m in 0..w.c_out {
            let mut y = 0i64;
            for k in 0..w.k {
                for c in 0..w.c_in {
                    y += w.at(m, k, c) * x.at(t + k, c);
                }
            }
            data.push(y);
        }
    }
    Ok(DenseTensor {
        timesteps: t_out,
        channels: w.c_out,
        data,
        domain: Domain::Integer,
    })
}

fn sign(v: bool) -> i64 {
    if v {
        1
    } else {
        -1
    }
}

/// `+1` where `gamma * (y - mu) / sigma + beta >= 0`, else `-1`.
pub fn batchnorm_sign_reference(y: &DenseTensor, params: &[BatchNorm]) -> Result<DenseTensor, OracleError> {
    if params.len() != y.channels {
        return Err(OracleError::Shape(format!("{} batchnorm channels for {} channels", params.len(), y.channels)));
    }
    if let Some(p) = params.iter().find(|p| p.sigma.is_nan() || p.sigma <= 0.0) {
        return Err(OracleError::BadSigma(p.sigma));
    }
    let data = y
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let p = &params[i % y.channels];
            let normalized = (v as f64 - p.mu) / p.sigma;
            sign(p.gamma * normalized + p.beta >= 0.0)
        })
        .collect();
    Ok(DenseTensor {
        data,
        domain: Domain::PmOne,
        ..*y
    })
}

/// Applies integer thresholds. For a binary layer with `n`-element windows
/// the threshold is on the number of agreeing positions, `(y + n) / 2`;
/// otherwise it is on `y` itself.
pub fn threshold_sign_reference(
    y: &DenseTensor,
    specs: &[ThresholdSpec],
    window: Option<usize>,
) -> Result<DenseTensor, OracleError> {
    if specs.len() != y.channels {
        return Err(OracleError::Shape(format!("{} thresholds for {} channels", specs.len(), y.channels)));
    }
    let data = y
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let acc = match window {
                Some(n) => (v + n as i64) / 2,
                None => v,
            };
            let spec = &specs[i % y.channels];
            sign(match spec.direction {
                Direction::Geq => acc >= spec.threshold as i64,
                Direction::Leq => acc <= spec.threshold as i64,
            })
        })
        .collect();
    Ok(DenseTensor {
        data,
        domain: Domain::PmOne,
        ..*y
    })
}

/// Max over non-overlapping windows of `pool` timesteps; the partial tail is
/// dropped.
pub fn maxpool_reference(x: &DenseTensor, pool: usize) -> Result<DenseTensor, OracleError> {
    if pool == 0 || pool > x.timesteps {
        return Err(OracleError::Shape(format!("pool {pool} over {} timesteps", x.timesteps)));
    }
    let t_out = x.timesteps / pool;
    let mut data = Vec::with_capacity(t_out * x.channels);
    for t in 0..t_out {
        for c in 0..x.channels {
            data.push((0..pool).map(|j| x.at(t * pool + j, c)).max().unwrap());
        }
    }
    Ok(DenseTensor {
        timesteps: t_out,
        data,
        ..*x
    })
}

/// `scale[m] * sum_i w(m, i) * x_i + bias[m]` over the flattened input.
pub fn fc_reference(x: &DenseTensor, weights: &[Vec<i64>], scale: &[f64], bias: &[f64]) -> Result<Vec<f64>, OracleError> {
    weights
        .iter()
        .zip(scale.iter().zip(bias))
        .map(|(row, (&s, &b))| {
            if row.len() != x.data.len() {
                return Err(OracleError::Shape(format!("fc row of {} for input of {}", row.len(), x.data.len())));
            }
            let dot: i64 = row.iter().zip(&x.data).map(|(w, v)| w * v).sum();
            Ok(s * dot as f64 + b)
        })
        .collect()
}

/// First index holding the maximum.
pub fn argmax_reference(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b] >= s => {}
            _ => best = Some(i),
        }
    }
    best
}

/// How a reference convolution produces its ±1 output.
#[derive(Debug, Clone, PartialEq)]
pub enum RefActivation {
    BatchNorm(Vec<BatchNorm>),
    Threshold(Vec<ThresholdSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefLayer {
    Conv {
        filters: DenseFilters,
        activation: RefActivation,
        /// Binary input (threshold on agreements) vs int8 input (threshold
        /// on the raw sum).
        binary_input: bool,
    },
    Pool(usize),
    Fc {
        weights: Vec<Vec<i64>>,
        scale: Vec<f64>,
        bias: Vec<f64>,
    },
}

/// An unpacked network description for [`forward_trace_reference`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceNetwork {
    pub layers: Vec<RefLayer>,
}

// bit i of an MSB-first word sequence
fn bit_at(words: &[u32], i: usize) -> i64 {
    let word = words[i / 32];
    let shift = 31 - (i % 32);
    if (word / (1u32 << shift)) % 2 == 1 {
        1
    } else {
        -1
    }
}

fn dense_filters(c_out: usize, k: usize, c_in: usize, filter: impl Fn(usize) -> Vec<u32>) -> DenseFilters {
    let mut data = Vec::with_capacity(c_out * k * c_in);
    for m in 0..c_out {
        let words = filter(m);
        for i in 0..k * c_in {
            data.push(bit_at(&words, i));
        }
    }
    DenseFilters { c_out, k, c_in, data }
}

impl ReferenceNetwork {
    /// Unpacks a network's parameters. Thresholds are kept as integer
    /// comparisons on the accumulator and FC parameters become reals.
    pub fn from_network(net: &Network) -> Self {
        let mut layers = Vec::new();
        for layer in net.layers() {
            match layer {
                Layer::Int8Conv(l) => layers.push(RefLayer::Conv {
                    filters: dense_filters(l.c_out(), l.k(), l.c_in(), |m| l.filter(m).to_vec()),
                    activation: RefActivation::Threshold(l.thresholds().to_vec()),
                    binary_input: false,
                }),
                Layer::BinaryConv(l) => layers.push(RefLayer::Conv {
                    filters: dense_filters(l.c_out(), l.k(), l.c_in(), |m| l.filter(m).to_vec()),
                    activation: RefActivation::Threshold(l.thresholds().to_vec()),
                    binary_input: true,
                }),
                Layer::Pool(p) => layers.push(RefLayer::Pool(p.k)),
                Layer::Fc(l) => layers.push(RefLayer::Fc {
                    weights: (0..l.n_classes())
                        .map(|m| (0..l.in_bits()).map(|i| bit_at(l.row(m), i)).collect())
                        .collect(),
                    scale: l.score_scale().iter().map(|&q| from_q16(q)).collect(),
                    bias: l.score_bias().iter().map(|&q| from_q16(q)).collect(),
                }),
            }
            // convs that already carry a fused pool
            if let Layer::Int8Conv(l) = layer {
                if let Some(p) = l.fused_pool() {
                    layers.push(RefLayer::Pool(p));
                }
            }
            if let Layer::BinaryConv(l) = layer {
                if let Some(p) = l.fused_pool() {
                    layers.push(RefLayer::Pool(p));
                }
            }
        }
        Self { layers }
    }
}

/// Intermediate results of a reference forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrace {
    /// Output of every conv stage, after any pooling that follows it.
    pub stages: Vec<DenseTensor>,
    pub scores: Vec<f64>,
    pub class: usize,
}

/// Runs every layer in order. Stage outputs are recorded after each conv
/// and its trailing pools, matching where the packed engine materializes
/// tensors.
pub fn forward_trace_reference(net: &ReferenceNetwork, input: &DenseTensor) -> Result<ReferenceTrace, OracleError> {
    let mut x = input.clone();
    let mut stages = Vec::new();
    let mut scores = None;
    for (i, layer) in net.layers.iter().enumerate() {
        match layer {
            RefLayer::Conv {
                filters,
                activation,
                binary_input,
            } => {
                let y = conv1d_reference(&x, filters)?;
                x = match activation {
                    RefActivation::BatchNorm(bn) => batchnorm_sign_reference(&y, bn)?,
                    RefActivation::Threshold(th) => {
                        threshold_sign_reference(&y, th, binary_input.then_some(filters.k * filters.c_in))?
                    }
                };
            }
            RefLayer::Pool(p) => x = maxpool_reference(&x, *p)?,
            RefLayer::Fc { weights, scale, bias } => scores = Some(fc_reference(&x, weights, scale, bias)?),
        }
        let stage_ends = match net.layers.get(i + 1) {
            Some(RefLayer::Pool(_)) => false,
            _ => !matches!(layer, RefLayer::Fc { .. }),
        };
        if stage_ends {
            stages.push(x.clone());
        }
    }
    let scores = scores.ok_or_else(|| OracleError::Shape("network has no fc layer".into()))?;
    let class = argmax_reference(&scores).ok_or_else(|| OracleError::Shape("no classes".into()))?;
    Ok(ReferenceTrace { stages, scores, class })
}

/// Reference prediction for a packed network on a dense input.
pub fn forward_reference(net: &Network, input: &DenseTensor) -> Result<usize, OracleError> {
    let expected = match net.input().domain {
        InputDomain::Int8 => Domain::Int8,
        InputDomain::Binary => Domain::PmOne,
    };
    if input.domain != expected && !(expected == Domain::Int8 && input.domain == Domain::PmOne) {
        return Err(OracleError::Shape(format!("input domain {:?}, network expects {:?}", input.domain, expected)));
    }
    Ok(forward_trace_reference(&ReferenceNetwork::from_network(net), input)?.class)
}

/// Recursive reading of a flat forest: the left subtree of node `i` is
/// rooted at `i + 1`. Votes are summed in `u64`.
pub fn forest_votes_reference(forest: &Forest, features: &[i8]) -> Vec<u64> {
    fn walk(forest: &Forest, i: usize, x: &[i8]) -> usize {
        let node = forest.nodes()[i];
        if node.feature_index < 0 {
            return node.right_child as usize;
        }
        let go_left = (x[node.feature_index as usize] as i32) <= (node.threshold as i32);
        walk(forest, if go_left { i + 1 } else { node.right_child as usize }, x)
    }
    let mut votes = vec![0u64; forest.n_classes()];
    for &root in forest.roots() {
        let leaf = walk(forest, root as usize, features);
        for (v, &p) in votes.iter_mut().zip(forest.leaf(leaf)) {
            *v += p as u64;
        }
    }
    votes
}

pub fn forest_reference(forest: &Forest, features: &[i8]) -> usize {
    let votes = forest_votes_reference(forest, features);
    let mut best = 0;
    for c in 1..votes.len() {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    best
}
