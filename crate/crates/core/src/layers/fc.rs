use super::{LayerError, NoProbe, Probe};
use crate::bitpack::{tail_mask, words_for, BitStream, PackedBitTensor, Word};

/// One in Q16.16.
pub const Q16_ONE: i32 = 1 << 16;

/// Nearest Q16.16 value to `v`.
pub fn to_q16(v: f64) -> Result<i32, LayerError> {
    let scaled = (v * Q16_ONE as f64).round();
    if !scaled.is_finite() || scaled < i32::MIN as f64 || scaled > i32::MAX as f64 {
        return Err(LayerError::Q16Range(v));
    }
    Ok(scaled as i32)
}

pub fn from_q16(q: i32) -> f64 {
    q as f64 / Q16_ONE as f64
}

/// Output classifier: binary dot product per class followed by an affine
/// map in Q16.16. Outputs are not re-binarized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryFcLayer {
    in_bits: usize,
    n_classes: usize,
    row_words: usize,
    weights: Vec<Word>,
    score_scale: Vec<i32>,
    score_bias: Vec<i32>,
}

impl BinaryFcLayer {
    pub fn new(
        in_bits: usize,
        n_classes: usize,
        weights: Vec<Word>,
        score_scale: Vec<i32>,
        score_bias: Vec<i32>,
    ) -> Result<Self, LayerError> {
        if in_bits == 0 || n_classes == 0 {
            return Err(LayerError::ZeroSize);
        }
        let row_words = words_for(in_bits);
        if weights.len() != n_classes * row_words {
            return Err(LayerError::WeightCount {
                expected: n_classes * row_words,
                actual: weights.len(),
            });
        }
        if score_scale.len() != n_classes || score_bias.len() != n_classes {
            return Err(LayerError::ThresholdCount {
                expected: n_classes,
                actual: score_scale.len().min(score_bias.len()),
            });
        }
        if weights
            .chunks(row_words)
            .any(|r| r.last().is_some_and(|w| w & !tail_mask(in_bits) != 0))
        {
            return Err(LayerError::DirtyWeights);
        }
        Ok(Self {
            in_bits,
            n_classes,
            row_words,
            weights,
            score_scale,
            score_bias,
        })
    }

    pub fn from_rows(rows: &[BitStream], score_scale: Vec<i32>, score_bias: Vec<i32>) -> Result<Self, LayerError> {
        let in_bits = rows.first().map_or(0, |r| r.bit_len());
        if let Some(r) = rows.iter().find(|r| r.bit_len() != in_bits) {
            return Err(LayerError::FilterLength {
                expected: in_bits,
                actual: r.bit_len(),
            });
        }
        let weights = rows.iter().flat_map(|r| r.words().iter().copied()).collect();
        Self::new(in_bits, rows.len(), weights, score_scale, score_bias)
    }

    pub fn in_bits(&self) -> usize {
        self.in_bits
    }
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }
    pub fn row_words(&self) -> usize {
        self.row_words
    }
    pub fn row(&self, class: usize) -> &[Word] {
        &self.weights[class * self.row_words..(class + 1) * self.row_words]
    }
    pub fn weight_words(&self) -> &[Word] {
        &self.weights
    }
    pub fn row_stream(&self, class: usize) -> BitStream {
        BitStream::from_words(self.row(class).to_vec(), self.in_bits).expect("rows are validated")
    }
    pub fn score_scale(&self) -> &[i32] {
        &self.score_scale
    }
    pub fn score_bias(&self) -> &[i32] {
        &self.score_bias
    }
}

pub fn fc_scores(x: &PackedBitTensor, layer: &BinaryFcLayer) -> Result<Vec<i64>, LayerError> {
    fc_scores_with(x, layer, &mut NoProbe)
}

/// Q16.16 scores `scale * dot(x, w_m) + bias`, where `x` is flattened in its
/// own time-major order. Two classes share each input word load.
pub fn fc_scores_with<P: Probe>(x: &PackedBitTensor, layer: &BinaryFcLayer, probe: &mut P) -> Result<Vec<i64>, LayerError> {
    let n = x.stream().bit_len();
    if n != layer.in_bits {
        return Err(LayerError::SizeMismatch {
            expected: layer.in_bits,
            actual: n,
        });
    }
    let input = x.words();
    let mut dots = vec![0i64; layer.n_classes];
    let mut m = 0;
    while m + 1 < layer.n_classes {
        let (r0, r1) = (layer.row(m), layer.row(m + 1));
        let (mut p0, mut p1) = (0u32, 0u32);
        for (j, &xw) in input.iter().enumerate() {
            let mask = if j + 1 == input.len() { tail_mask(n) } else { Word::MAX };
            p0 += (!(xw ^ r0[j]) & mask).count_ones();
            p1 += (!(xw ^ r1[j]) & mask).count_ones();
        }
        dots[m] = 2 * p0 as i64 - n as i64;
        dots[m + 1] = 2 * p1 as i64 - n as i64;
        m += 2;
    }
    if m < layer.n_classes {
        dots[m] = crate::bitpack::dot_words(input, layer.row(m), n);
    }
    let words = (layer.n_classes * layer.row_words) as u64;
    probe.xnor_words(words);
    probe.popcounts(words);
    Ok(dots
        .iter()
        .zip(layer.score_scale.iter().zip(&layer.score_bias))
        .map(|(&d, (&s, &b))| s as i64 * d + b as i64)
        .collect())
}

/// Index of the largest score; ties go to the lowest index.
pub fn predict<T: PartialOrd + Copy>(scores: &[T]) -> Result<usize, LayerError> {
    let (first, rest) = scores.split_first().ok_or(LayerError::EmptyScores)?;
    let mut best = (0, *first);
    for (i, &s) in rest.iter().enumerate() {
        if s > best.1 {
            best = (i + 1, s);
        }
    }
    Ok(best.0)
}
