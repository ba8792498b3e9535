//! Bit-level primitives shared by every kernel.
//!
//! Streams are made of 32-bit words. Logical bit `i` lives in word `i / 32`
//! at bit position `31 - i % 32`, so bit 0 of a stream is the most
//! significant bit of its first word. With this order the mask for a partial
//! trailing word is a run of leading ones, and advancing a window by `n` bits
//! is a left shift with the top `n` bits of the next word shifted in.
//!
//! Binary values use the usual encoding: numerical `+1` is bit 1, `-1` is
//! bit 0.

use thiserror::Error;

/// Width of a storage word in bits.
pub const WORD_BITS: usize = 32;

/// A single storage word.
pub type Word = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitError {
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("value {value} at index {index} is not -1 or +1")]
    NotBinary { index: usize, value: i64 },
    #[error("mask width {0} exceeds the word size")]
    MaskTooWide(usize),
    #[error("window [{offset}, {offset}+{length}) exceeds stream of {bit_len} bits")]
    WindowOutOfRange {
        offset: usize,
        length: usize,
        bit_len: usize,
    },
    #[error("operand lengths differ: {0} vs {1} bits")]
    OperandMismatch(usize, usize),
    #[error("{words} words cannot hold exactly {bit_len} bits")]
    WordCount { words: usize, bit_len: usize },
    #[error("bits past the end of the stream are not zero")]
    DirtyTail,
}

/// Number of words needed to hold `bits` bits.
#[inline]
pub const fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

/// Word with exactly `n_bits` most-significant bits set.
pub fn leftover_mask(n_bits: usize) -> Result<Word, BitError> {
    match n_bits {
        0 => Ok(0),
        1..=32 => Ok(Word::MAX << (WORD_BITS - n_bits)),
        _ => Err(BitError::MaskTooWide(n_bits)),
    }
}

/// Mask for the final word of an `n_bits` long stream (all ones when the
/// stream ends on a word boundary).
#[inline]
pub(crate) fn tail_mask(n_bits: usize) -> Word {
    match n_bits % WORD_BITS {
        0 => Word::MAX,
        r => Word::MAX << (WORD_BITS - r),
    }
}

/// An MSB-first packed bit sequence whose unused trailing bits are zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BitStream {
    words: Vec<Word>,
    bit_len: usize,
}

impl BitStream {
    pub fn zeros(bit_len: usize) -> Self {
        Self {
            words: vec![0; words_for(bit_len)],
            bit_len,
        }
    }

    /// Wraps packed words. The word count must match `bit_len` exactly and
    /// the bits past `bit_len` must be clear.
    pub fn from_words(words: Vec<Word>, bit_len: usize) -> Result<Self, BitError> {
        if words.len() != words_for(bit_len) {
            return Err(BitError::WordCount {
                words: words.len(),
                bit_len,
            });
        }
        if let Some(&last) = words.last() {
            if last & !tail_mask(bit_len) != 0 {
                return Err(BitError::DirtyTail);
            }
        }
        Ok(Self { words, bit_len })
    }

    /// Like [`BitStream::from_words`] but clears any trailing garbage instead
    /// of rejecting it.
    pub fn from_words_masked(mut words: Vec<Word>, bit_len: usize) -> Result<Self, BitError> {
        if words.len() != words_for(bit_len) {
            return Err(BitError::WordCount {
                words: words.len(),
                bit_len,
            });
        }
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(bit_len);
        }
        Ok(Self { words, bit_len })
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut bit_len = 0;
        for bit in bits {
            if bit_len % WORD_BITS == 0 {
                words.push(0);
            }
            if bit {
                *words.last_mut().unwrap() |= 1 << (WORD_BITS - 1 - bit_len % WORD_BITS);
            }
            bit_len += 1;
        }
        Self { words, bit_len }
    }

    #[inline]
    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    #[inline]
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn into_words(self) -> Vec<Word> {
        self.words
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bit_len == 0
    }

    /// Bit `i`. Panics when `i` is out of range.
    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.bit_len, "bit {i} out of range ({} bits)", self.bit_len);
        self.words[i / WORD_BITS] >> (WORD_BITS - 1 - i % WORD_BITS) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.bit_len, "bit {i} out of range ({} bits)", self.bit_len);
        let mask = 1 << (WORD_BITS - 1 - i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    /// ORs `value` into bit `i`.
    #[inline]
    pub(crate) fn or_bit(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.bit_len);
        self.words[i / WORD_BITS] |= (value as Word) << (WORD_BITS - 1 - i % WORD_BITS);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.bit_len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Bitwise complement restricted to the valid bits.
    pub fn not(&self) -> Self {
        let mut words: Vec<Word> = self.words.iter().map(|w| !w).collect();
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(self.bit_len);
        }
        Self {
            words,
            bit_len: self.bit_len,
        }
    }
}

/// Copies `length` bits starting at `bit_offset` of `src` into `dst`,
/// aligned to bit 0 of `dst[0]`. The final partial word is masked.
///
/// `dst` must hold at least `words_for(length)` words; the caller checks the
/// range.
#[inline]
pub(crate) fn extract_window_into(src: &[Word], bit_offset: usize, length: usize, dst: &mut [Word]) {
    let n_words = words_for(length);
    let first = bit_offset / WORD_BITS;
    let shift = bit_offset % WORD_BITS;
    if shift == 0 {
        dst[..n_words].copy_from_slice(&src[first..first + n_words]);
    } else {
        for (j, out) in dst[..n_words].iter_mut().enumerate() {
            let hi = src[first + j] << shift;
            let lo = src.get(first + j + 1).map_or(0, |w| w >> (WORD_BITS - shift));
            *out = hi | lo;
        }
    }
    if n_words > 0 {
        dst[n_words - 1] &= tail_mask(length);
    }
}

/// Returns bits `[bit_offset, bit_offset + length)` of `src` as a fresh stream.
pub fn extract_window(src: &BitStream, bit_offset: usize, length: usize) -> Result<BitStream, BitError> {
    if bit_offset.checked_add(length).is_none_or(|end| end > src.bit_len) {
        return Err(BitError::WindowOutOfRange {
            offset: bit_offset,
            length,
            bit_len: src.bit_len,
        });
    }
    let mut words = vec![0; words_for(length)];
    extract_window_into(&src.words, bit_offset, length, &mut words);
    Ok(BitStream { words, bit_len: length })
}

/// XNOR-popcount over the first `n_bits` bits of two word slices. Bits past
/// `n_bits` are masked off after the XNOR, so their content is irrelevant.
#[inline]
pub(crate) fn xnor_popcount(a: &[Word], b: &[Word], n_bits: usize) -> u32 {
    let n_words = words_for(n_bits);
    if n_words == 0 {
        return 0;
    }
    let full = n_words - 1;
    let mut acc = 0;
    for (x, y) in a[..full].iter().zip(&b[..full]) {
        acc += (!(x ^ y)).count_ones();
    }
    acc + (!(a[full] ^ b[full]) & tail_mask(n_bits)).count_ones()
}

/// `2 * popcount(xnor(a, b)) - n_bits` over raw word slices; trailing bits of
/// the last word may hold anything.
pub fn dot_words(a: &[Word], b: &[Word], n_bits: usize) -> i64 {
    2 * xnor_popcount(a, b, n_bits) as i64 - n_bits as i64
}

/// Number of positions where `a` and `b` agree.
pub fn popcount_sum(a: &BitStream, b: &BitStream) -> Result<u32, BitError> {
    if a.bit_len != b.bit_len {
        return Err(BitError::OperandMismatch(a.bit_len, b.bit_len));
    }
    Ok(xnor_popcount(&a.words, &b.words, a.bit_len))
}

/// Dot product of the two ±1 vectors encoded by `a` and `b`.
pub fn binary_dot(a: &BitStream, b: &BitStream) -> Result<i64, BitError> {
    let p = popcount_sum(a, b)?;
    Ok(2 * p as i64 - a.bit_len as i64)
}

/// A `(T, C)` binary activation tensor in time-major order: element `(t, c)`
/// is stream bit `t * C + c`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PackedBitTensor {
    stream: BitStream,
    timesteps: usize,
    channels: usize,
}

impl PackedBitTensor {
    pub fn zeros(timesteps: usize, channels: usize) -> Self {
        Self {
            stream: BitStream::zeros(timesteps * channels),
            timesteps,
            channels,
        }
    }

    pub fn from_stream(stream: BitStream, timesteps: usize, channels: usize) -> Result<Self, BitError> {
        if stream.bit_len() != timesteps * channels {
            return Err(BitError::LengthMismatch {
                expected: timesteps * channels,
                actual: stream.bit_len(),
            });
        }
        Ok(Self {
            stream,
            timesteps,
            channels,
        })
    }

    /// Packs time-major ±1 values.
    pub fn pack(values: &[i8], timesteps: usize, channels: usize) -> Result<Self, BitError> {
        if values.len() != timesteps * channels {
            return Err(BitError::LengthMismatch {
                expected: timesteps * channels,
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, &v)| v != 1 && v != -1) {
            return Err(BitError::NotBinary {
                index,
                value: value as i64,
            });
        }
        Ok(Self {
            stream: BitStream::from_bits(values.iter().map(|&v| v == 1)),
            timesteps,
            channels,
        })
    }

    pub fn unpack(&self) -> Vec<i8> {
        self.stream.iter().map(|b| if b { 1 } else { -1 }).collect()
    }

    #[inline]
    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn stream(&self) -> &BitStream {
        &self.stream
    }

    pub fn into_stream(self) -> BitStream {
        self.stream
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize) -> bool {
        assert!(c < self.channels);
        self.stream.get(t * self.channels + c)
    }

    #[inline]
    pub fn set(&mut self, t: usize, c: usize, value: bool) {
        assert!(c < self.channels);
        self.stream.set(t * self.channels + c, value)
    }

    #[inline]
    pub(crate) fn or_bit(&mut self, t: usize, c: usize, value: bool) {
        self.stream.or_bit(t * self.channels + c, value)
    }

    #[inline]
    pub(crate) fn words(&self) -> &[Word] {
        self.stream.words()
    }
}
