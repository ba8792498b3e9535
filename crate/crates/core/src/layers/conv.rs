use std::ops::Deref;

use super::{check_pool, Int8Tensor, LayerError, NoProbe, Probe, ThresholdSpec};
use crate::bitpack::{extract_window_into, tail_mask, words_for, BitStream, PackedBitTensor, Word};

/// Largest `K * C_in` accepted by the int8 layer; keeps the accumulator in
/// 32 bits.
pub const MAX_INT8_WINDOW: usize = 1 << 24;

/// Inner-loop blocking of the binary convolution. Only affects speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Unroll {
    /// One output channel at one timestep per iteration.
    None,
    /// Two output channels at two consecutive timesteps per iteration,
    /// sharing the window and filter loads.
    #[default]
    TwoByTwo,
}

/// Weights, thresholds and shape shared by both convolution kinds.
///
/// Filter `m` holds `K * C_in` bits in the same time-major order as the
/// activations (bit `k * C_in + c`), and starts on a word boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvParams {
    c_in: usize,
    c_out: usize,
    k: usize,
    filter_words: usize,
    weights: Vec<Word>,
    thresholds: Vec<ThresholdSpec>,
    fused_pool: Option<usize>,
}

impl ConvParams {
    fn new(
        c_in: usize,
        c_out: usize,
        k: usize,
        weights: Vec<Word>,
        thresholds: Vec<ThresholdSpec>,
        fused_pool: Option<usize>,
    ) -> Result<Self, LayerError> {
        if k == 0 || c_in == 0 {
            return Err(LayerError::ZeroSize);
        }
        if !c_out.is_power_of_two() {
            return Err(LayerError::NotPowerOfTwo { what: "c_out", value: c_out });
        }
        if thresholds.len() != c_out {
            return Err(LayerError::ThresholdCount {
                expected: c_out,
                actual: thresholds.len(),
            });
        }
        let n = k * c_in;
        let filter_words = words_for(n);
        if weights.len() != c_out * filter_words {
            return Err(LayerError::WeightCount {
                expected: c_out * filter_words,
                actual: weights.len(),
            });
        }
        if weights
            .chunks(filter_words)
            .any(|f| f.last().is_some_and(|w| w & !tail_mask(n) != 0))
        {
            return Err(LayerError::DirtyWeights);
        }
        if let Some(p) = fused_pool {
            if p == 0 {
                return Err(LayerError::ZeroSize);
            }
        }
        Ok(Self {
            c_in,
            c_out,
            k,
            filter_words,
            weights,
            thresholds,
            fused_pool,
        })
    }

    fn from_filters(
        c_in: usize,
        k: usize,
        filters: &[BitStream],
        thresholds: Vec<ThresholdSpec>,
        fused_pool: Option<usize>,
    ) -> Result<Self, LayerError> {
        let n = k * c_in;
        if let Some(f) = filters.iter().find(|f| f.bit_len() != n) {
            return Err(LayerError::FilterLength {
                expected: n,
                actual: f.bit_len(),
            });
        }
        let weights = filters.iter().flat_map(|f| f.words().iter().copied()).collect();
        Self::new(c_in, filters.len(), k, weights, thresholds, fused_pool)
    }

    #[inline]
    pub fn c_in(&self) -> usize {
        self.c_in
    }
    #[inline]
    pub fn c_out(&self) -> usize {
        self.c_out
    }
    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }
    /// Bits per filter, `K * C_in`.
    #[inline]
    pub fn window_bits(&self) -> usize {
        self.k * self.c_in
    }
    /// Words per word-aligned filter.
    #[inline]
    pub fn filter_words(&self) -> usize {
        self.filter_words
    }
    #[inline]
    pub fn filter(&self, m: usize) -> &[Word] {
        &self.weights[m * self.filter_words..(m + 1) * self.filter_words]
    }
    /// All filters, back to back.
    #[inline]
    pub fn weight_words(&self) -> &[Word] {
        &self.weights
    }
    #[inline]
    pub fn thresholds(&self) -> &[ThresholdSpec] {
        &self.thresholds
    }
    #[inline]
    pub fn fused_pool(&self) -> Option<usize> {
        self.fused_pool
    }

    pub fn filter_stream(&self, m: usize) -> BitStream {
        BitStream::from_words(self.filter(m).to_vec(), self.window_bits()).expect("filters are validated")
    }

    pub(crate) fn thresholds_mut(&mut self) -> &mut [ThresholdSpec] {
        &mut self.thresholds
    }

    pub(crate) fn set_fused_pool(&mut self, pool: Option<usize>) {
        self.fused_pool = pool;
    }

    /// `(T_conv, T_out)` for an input of `timesteps`: the unpooled valid
    /// convolution length and the length after the fused pool.
    pub fn output_timesteps(&self, timesteps: usize) -> Result<(usize, usize), LayerError> {
        if timesteps < self.k {
            return Err(LayerError::TooShort { timesteps, k: self.k });
        }
        let t_conv = timesteps - self.k + 1;
        let pool = self.fused_pool.unwrap_or(1);
        check_pool(t_conv, pool, pool)?;
        Ok((t_conv, t_conv / pool))
    }
}

/// Binarized 1D convolution (stride 1, valid padding) with fused
/// batchnorm thresholds and optional fused OR-pooling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryConvLayer(ConvParams);

impl BinaryConvLayer {
    pub fn new(
        c_in: usize,
        c_out: usize,
        k: usize,
        weights: Vec<Word>,
        thresholds: Vec<ThresholdSpec>,
        fused_pool: Option<usize>,
    ) -> Result<Self, LayerError> {
        if !c_in.is_power_of_two() {
            return Err(LayerError::NotPowerOfTwo { what: "c_in", value: c_in });
        }
        ConvParams::new(c_in, c_out, k, weights, thresholds, fused_pool).map(Self)
    }

    pub fn from_filters(
        c_in: usize,
        k: usize,
        filters: &[BitStream],
        thresholds: Vec<ThresholdSpec>,
        fused_pool: Option<usize>,
    ) -> Result<Self, LayerError> {
        if !c_in.is_power_of_two() {
            return Err(LayerError::NotPowerOfTwo { what: "c_in", value: c_in });
        }
        ConvParams::from_filters(c_in, k, filters, thresholds, fused_pool).map(Self)
    }

    pub(crate) fn params_mut(&mut self) -> &mut ConvParams {
        &mut self.0
    }
}

impl Deref for BinaryConvLayer {
    type Target = ConvParams;
    fn deref(&self) -> &ConvParams {
        &self.0
    }
}

/// First-layer convolution over int8 samples with binary weights. The
/// threshold applies to the signed accumulator directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Int8ConvLayer(ConvParams);

impl Int8ConvLayer {
    pub fn new(
        c_in: usize,
        c_out: usize,
        k: usize,
        weights: Vec<Word>,
        thresholds: Vec<ThresholdSpec>,
        fused_pool: Option<usize>,
    ) -> Result<Self, LayerError> {
        if k * c_in > MAX_INT8_WINDOW {
            return Err(LayerError::AccumulatorBound(k * c_in));
        }
        ConvParams::new(c_in, c_out, k, weights, thresholds, fused_pool).map(Self)
    }

    pub fn from_filters(
        c_in: usize,
        k: usize,
        filters: &[BitStream],
        thresholds: Vec<ThresholdSpec>,
        fused_pool: Option<usize>,
    ) -> Result<Self, LayerError> {
        if k * c_in > MAX_INT8_WINDOW {
            return Err(LayerError::AccumulatorBound(k * c_in));
        }
        ConvParams::from_filters(c_in, k, filters, thresholds, fused_pool).map(Self)
    }

    pub(crate) fn params_mut(&mut self) -> &mut ConvParams {
        &mut self.0
    }
}

impl Deref for Int8ConvLayer {
    type Target = ConvParams;
    fn deref(&self) -> &ConvParams {
        &self.0
    }
}

pub fn conv1d_binary(x: &PackedBitTensor, layer: &BinaryConvLayer) -> Result<PackedBitTensor, LayerError> {
    conv1d_binary_with(x, layer, Unroll::default(), &mut NoProbe)
}

/// [`conv1d_binary`] with explicit blocking and an op-count probe.
///
/// Schedule: timesteps outer, output channels inner. The window for
/// timestep `t` starts at bit `t * C_in` and is realigned into a scratch
/// buffer; the trailing partial word is masked. With a fused pool of `p`
/// each result is ORed into output timestep `t / p` and convolution steps
/// past the last full pool window are skipped.
pub fn conv1d_binary_with<P: Probe>(
    x: &PackedBitTensor,
    layer: &BinaryConvLayer,
    unroll: Unroll,
    probe: &mut P,
) -> Result<PackedBitTensor, LayerError> {
    if x.channels() != layer.c_in {
        return Err(LayerError::ChannelMismatch {
            expected: layer.c_in,
            actual: x.channels(),
        });
    }
    let (_, t_out) = layer.output_timesteps(x.timesteps())?;
    let pool = layer.fused_pool.unwrap_or(1);
    let t_eff = t_out * pool;
    let c_in = layer.c_in;
    let c_out = layer.c_out;
    let n = layer.window_bits();
    let fw = layer.filter_words;

    let mut out = PackedBitTensor::zeros(t_out, c_out);
    let mut scratch = vec![0 as Word; 2 * fw];
    let src = x.words();
    let th = &layer.thresholds;

    let mut t = 0;
    if unroll == Unroll::TwoByTwo {
        while t + 1 < t_eff {
            let (w0, w1) = scratch.split_at_mut(fw);
            extract_window_into(src, t * c_in, n, w0);
            extract_window_into(src, (t + 1) * c_in, n, w1);
            let mut m = 0;
            while m + 1 < c_out {
                let [p00, p01, p10, p11] = block_2x2(w0, w1, layer.filter(m), layer.filter(m + 1), n);
                out.or_bit(t / pool, m, th[m].fires(p00 as i64));
                out.or_bit(t / pool, m + 1, th[m + 1].fires(p01 as i64));
                out.or_bit((t + 1) / pool, m, th[m].fires(p10 as i64));
                out.or_bit((t + 1) / pool, m + 1, th[m + 1].fires(p11 as i64));
                m += 2;
            }
            if m < c_out {
                let f = layer.filter(m);
                out.or_bit(t / pool, m, th[m].fires(popcount(w0, f, n) as i64));
                out.or_bit((t + 1) / pool, m, th[m].fires(popcount(w1, f, n) as i64));
            }
            t += 2;
        }
    }
    let w0 = &mut scratch[..fw];
    while t < t_eff {
        extract_window_into(src, t * c_in, n, w0);
        for (m, spec) in th.iter().enumerate() {
            out.or_bit(t / pool, m, spec.fires(popcount(w0, layer.filter(m), n) as i64));
        }
        t += 1;
    }

    let outputs = (t_eff * c_out) as u64;
    probe.xnor_words(outputs * fw as u64);
    probe.popcounts(outputs * fw as u64);
    probe.compares(outputs);
    if layer.fused_pool.is_some() {
        probe.ors(outputs);
    }
    Ok(out)
}

// Both operands are already masked past `n`, so XNOR sets those bits and
// the final word needs masking again.
#[inline(always)]
fn popcount(w: &[Word], f: &[Word], n: usize) -> u32 {
    crate::bitpack::xnor_popcount(w, f, n)
}

/// Popcounts for (t, m), (t, m+1), (t+1, m), (t+1, m+1).
#[inline(always)]
fn block_2x2(w0: &[Word], w1: &[Word], f0: &[Word], f1: &[Word], n: usize) -> [u32; 4] {
    let words = w0.len();
    let mut acc = [0u32; 4];
    for j in 0..words {
        let mask = if j + 1 == words { tail_mask(n) } else { Word::MAX };
        let (x0, x1, y0, y1) = (w0[j], w1[j], f0[j], f1[j]);
        acc[0] += (!(x0 ^ y0) & mask).count_ones();
        acc[1] += (!(x0 ^ y1) & mask).count_ones();
        acc[2] += (!(x1 ^ y0) & mask).count_ones();
        acc[3] += (!(x1 ^ y1) & mask).count_ones();
    }
    acc
}

pub fn conv1d_int8(x: &Int8Tensor, layer: &Int8ConvLayer) -> Result<PackedBitTensor, LayerError> {
    conv1d_int8_with(x, layer, &mut NoProbe)
}

/// Int8 convolution: `A(t, m) = sum_k sum_c w(m, k, c) * x(t + k, c)` with
/// `w` in {-1, +1}, thresholded per channel.
pub fn conv1d_int8_with<P: Probe>(
    x: &Int8Tensor,
    layer: &Int8ConvLayer,
    probe: &mut P,
) -> Result<PackedBitTensor, LayerError> {
    if x.channels() != layer.c_in {
        return Err(LayerError::ChannelMismatch {
            expected: layer.c_in,
            actual: x.channels(),
        });
    }
    let (_, t_out) = layer.output_timesteps(x.timesteps())?;
    let pool = layer.fused_pool.unwrap_or(1);
    let t_eff = t_out * pool;
    let n = layer.window_bits();
    let mut out = PackedBitTensor::zeros(t_out, layer.c_out);
    let data = x.data();

    for t in 0..t_eff {
        let window = &data[t * layer.c_in..t * layer.c_in + n];
        let total: i32 = window.iter().map(|&v| v as i32).sum();
        for m in 0..layer.c_out {
            // A = 2 * (sum where w = +1) - (sum of all)
            let mut positive = 0i32;
            for (j, chunk) in window.chunks(32).enumerate() {
                let word = layer.filter(m)[j];
                for (i, &v) in chunk.iter().enumerate() {
                    if word >> (31 - i) & 1 == 1 {
                        positive += v as i32;
                    }
                }
            }
            let acc = 2 * positive as i64 - total as i64;
            out.or_bit(t / pool, m, layer.thresholds[m].fires(acc));
        }
    }

    let outputs = (t_eff * layer.c_out) as u64;
    probe.int8_macs(outputs * n as u64);
    probe.compares(outputs);
    if layer.fused_pool.is_some() {
        probe.ors(outputs);
    }
    Ok(out)
}
