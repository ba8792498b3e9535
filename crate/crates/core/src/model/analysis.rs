use serde::Serialize;

use super::{InputDomain, Layer, LayerOutput, Network};
use crate::bitpack::{words_for, WORD_BITS};
use crate::layers::ConvParams;

/// Storage needed by one descriptor, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub struct LayerFootprint {
    /// `K * C_in * C_out` for convolutions, `in_bits * n_classes` for fc.
    pub raw_weight_bits: u64,
    /// Weights with each filter (or fc row) padded to a word boundary.
    pub aligned_weight_bits: u64,
    /// Conv: i32 threshold + 8-bit direction per output channel.
    /// FC: Q16.16 scale and bias per class.
    pub threshold_bits: u64,
    /// Output buffer: packed activations, or 64-bit scores for fc.
    pub activation_buffer_bits: u64,
    /// Weights if every channel count were rounded up to a multiple of 32.
    pub padded32_weight_bits: u64,
}

impl LayerFootprint {
    /// `padded32 / raw`; 1.0 when the layer needs no padding.
    pub fn padding_ratio(&self) -> f64 {
        if self.raw_weight_bits == 0 {
            1.0
        } else {
            self.padded32_weight_bits as f64 / self.raw_weight_bits as f64
        }
    }

    /// Extra storage relative to raw: `padded32 / raw - 1`.
    pub fn padding_overhead(&self) -> f64 {
        self.padding_ratio() - 1.0
    }
}

impl std::ops::AddAssign for LayerFootprint {
    fn add_assign(&mut self, rhs: Self) {
        self.raw_weight_bits += rhs.raw_weight_bits;
        self.aligned_weight_bits += rhs.aligned_weight_bits;
        self.threshold_bits += rhs.threshold_bits;
        self.activation_buffer_bits += rhs.activation_buffer_bits;
        self.padded32_weight_bits += rhs.padded32_weight_bits;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FootprintReport {
    /// Network input buffer (8 bits per sample for int8 input).
    pub input_buffer_bits: u64,
    /// One entry per descriptor; pool entries are all zero because pooling
    /// is fused into the preceding conv's output buffer.
    pub layers: Vec<LayerFootprint>,
    pub total: LayerFootprint,
}

fn pad32(c: usize) -> u64 {
    (c.div_ceil(WORD_BITS) * WORD_BITS) as u64
}

/// Weight storage of a single `K x C_in x C_out` convolution as
/// `(raw, aligned, padded32)` bits.
pub fn conv_weight_footprint(c_in: usize, c_out: usize, k: usize) -> (u64, u64, u64) {
    let raw = (k * c_in * c_out) as u64;
    let aligned = (c_out * words_for(k * c_in) * WORD_BITS) as u64;
    let padded = k as u64 * pad32(c_in) * pad32(c_out);
    (raw, aligned, padded)
}

fn conv_footprint(l: &ConvParams, out_bits: u64) -> LayerFootprint {
    let (raw, aligned, padded) = conv_weight_footprint(l.c_in(), l.c_out(), l.k());
    LayerFootprint {
        raw_weight_bits: raw,
        aligned_weight_bits: aligned,
        threshold_bits: l.c_out() as u64 * 40,
        activation_buffer_bits: out_bits,
        padded32_weight_bits: padded,
    }
}

/// Word-level operation counts for one inference, from shapes alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub struct OpCountReport {
    pub xnor_word_ops: u64,
    pub popcount_ops: u64,
    pub threshold_compares: u64,
    pub or_ops: u64,
    pub int8_mac_equivalents: u64,
}

impl From<crate::layers::OpCounter> for OpCountReport {
    fn from(c: crate::layers::OpCounter) -> Self {
        Self {
            xnor_word_ops: c.xnor_word_ops,
            popcount_ops: c.popcount_ops,
            threshold_compares: c.threshold_compares,
            or_ops: c.or_ops,
            int8_mac_equivalents: c.int8_mac_equivalents,
        }
    }
}

impl std::ops::AddAssign for OpCountReport {
    fn add_assign(&mut self, rhs: Self) {
        self.xnor_word_ops += rhs.xnor_word_ops;
        self.popcount_ops += rhs.popcount_ops;
        self.threshold_compares += rhs.threshold_compares;
        self.or_ops += rhs.or_ops;
        self.int8_mac_equivalents += rhs.int8_mac_equivalents;
    }
}

impl Network {
    pub fn footprint(&self) -> FootprintReport {
        let input_buffer_bits = (self.input_len()
            * match self.input.domain {
                InputDomain::Int8 => 8,
                InputDomain::Binary => 1,
            }) as u64;
        let bits = |i: usize| match self.chain[i] {
            LayerOutput::Activations(s) => (s.timesteps * s.channels) as u64,
            LayerOutput::Scores(n) => n as u64 * 64,
        };
        // a conv writes straight into the pooled buffer when a pool follows
        let stage_bits = |i: usize| match self.layers.get(i + 1) {
            Some(Layer::Pool(_)) => bits(i + 1),
            _ => bits(i),
        };
        let shapes = self.input_shapes();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let fp = match layer {
                Layer::Int8Conv(l) => conv_footprint(l, stage_bits(i)),
                Layer::BinaryConv(l) => conv_footprint(l, stage_bits(i)),
                Layer::Pool(_) => LayerFootprint::default(),
                Layer::Fc(l) => {
                    let input = shapes[i];
                    LayerFootprint {
                        raw_weight_bits: (l.in_bits() * l.n_classes()) as u64,
                        aligned_weight_bits: (l.n_classes() * l.row_words() * WORD_BITS) as u64,
                        threshold_bits: l.n_classes() as u64 * 64,
                        activation_buffer_bits: bits(i),
                        padded32_weight_bits: input.timesteps as u64 * pad32(input.channels) * l.n_classes() as u64,
                    }
                }
            };
            layers.push(fp);
        }
        let mut total = LayerFootprint::default();
        for fp in &layers {
            total += *fp;
        }
        FootprintReport {
            input_buffer_bits,
            layers,
            total,
        }
    }

    /// Closed-form operation counts per descriptor. A binary conv producing
    /// `T` computed timesteps costs `T * C_out * ceil(K * C_in / 32)` XNOR
    /// words; with a fused pool only the timesteps covered by full pool
    /// windows are computed.
    pub fn count_ops_per_layer(&self) -> Vec<OpCountReport> {
        let shapes = self.input_shapes();
        self.layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let pool = match self.layers.get(i + 1) {
                    Some(Layer::Pool(p)) => Some(p.k),
                    _ => None,
                };
                let conv = |l: &ConvParams| {
                    let t_in = shapes[i].timesteps;
                    let t_conv = t_in - l.k() + 1;
                    let computed = match pool {
                        Some(p) => t_conv / p * p,
                        None => t_conv,
                    } as u64;
                    (computed * l.c_out() as u64, l.filter_words() as u64, l.window_bits() as u64)
                };
                match layer {
                    Layer::BinaryConv(l) => {
                        let (outputs, words, _) = conv(l);
                        OpCountReport {
                            xnor_word_ops: outputs * words,
                            popcount_ops: outputs * words,
                            threshold_compares: outputs,
                            or_ops: if pool.is_some() { outputs } else { 0 },
                            int8_mac_equivalents: 0,
                        }
                    }
                    Layer::Int8Conv(l) => {
                        let (outputs, _, window) = conv(l);
                        OpCountReport {
                            threshold_compares: outputs,
                            or_ops: if pool.is_some() { outputs } else { 0 },
                            int8_mac_equivalents: outputs * window,
                            ..Default::default()
                        }
                    }
                    Layer::Pool(_) => OpCountReport::default(),
                    Layer::Fc(l) => {
                        let words = (l.n_classes() * l.row_words()) as u64;
                        OpCountReport {
                            xnor_word_ops: words,
                            popcount_ops: words,
                            ..Default::default()
                        }
                    }
                }
            })
            .collect()
    }

    pub fn count_ops(&self) -> OpCountReport {
        let mut total = OpCountReport::default();
        for r in self.count_ops_per_layer() {
            total += r;
        }
        total
    }
}
