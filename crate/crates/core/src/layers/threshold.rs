use serde::{Deserialize, Serialize};

use super::LayerError;

/// Which side of the threshold produces a `+1` output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Fire when the accumulator is `>=` the threshold (positive gamma).
    Geq,
    /// Fire when the accumulator is `<=` the threshold (negative gamma).
    Leq,
}

impl Direction {
    pub fn code(self) -> u8 {
        match self {
            Direction::Geq => 0,
            Direction::Leq => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Direction::Geq),
            1 => Some(Direction::Leq),
            _ => None,
        }
    }
}

/// Fused batchnorm + sign for one output channel, as an integer comparison
/// on the layer accumulator. For binary layers the accumulator is the
/// popcount `P`; for the int8 layer it is the raw signed sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub threshold: i32,
    pub direction: Direction,
}

impl ThresholdSpec {
    pub const fn geq(threshold: i32) -> Self {
        Self {
            threshold,
            direction: Direction::Geq,
        }
    }

    pub const fn leq(threshold: i32) -> Self {
        Self {
            threshold,
            direction: Direction::Leq,
        }
    }

    #[inline]
    pub fn fires(&self, acc: i64) -> bool {
        match self.direction {
            Direction::Geq => acc >= self.threshold as i64,
            Direction::Leq => acc <= self.threshold as i64,
        }
    }

    /// The threshold whose output is the exact complement of this one.
    pub fn complement(&self) -> Self {
        match self.direction {
            Direction::Geq => Self::leq(self.threshold.saturating_sub(1)),
            Direction::Leq => Self::geq(self.threshold.saturating_add(1)),
        }
    }
}

/// Per-channel batchnorm statistics and affine parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl BatchNorm {
    pub const IDENTITY: BatchNorm = BatchNorm {
        mu: 0.0,
        sigma: 1.0,
        gamma: 1.0,
        beta: 0.0,
    };

    pub fn check(&self) -> Result<(), LayerError> {
        if self.sigma.is_nan() || self.sigma <= 0.0 || self.sigma.is_infinite() {
            return Err(LayerError::BadSigma(self.sigma));
        }
        if self.gamma == 0.0 || !self.gamma.is_finite() {
            return Err(LayerError::ZeroGamma);
        }
        if !self.mu.is_finite() || !self.beta.is_finite() {
            return Err(LayerError::NonFinite);
        }
        Ok(())
    }

    /// `sign(gamma * (y - mu) / sigma + beta)` with `sign(0) = +1`.
    #[inline]
    fn fires(&self, y: f64) -> bool {
        self.gamma * (y - self.mu) / self.sigma + self.beta >= 0.0
    }
}

/// Folds batchnorm into a popcount threshold for a binary layer whose
/// windows hold `n = K * C_in` bits. The accumulator seen by the
/// batchnorm is `y = 2P - n`.
pub fn fold_batchnorm_binary(bn: &BatchNorm, k: usize, c_in: usize) -> Result<ThresholdSpec, LayerError> {
    bn.check()?;
    let n = (k * c_in) as i64;
    let raw = ((bn.mu - bn.beta * bn.sigma / bn.gamma) + n as f64) / 2.0;
    Ok(fold(bn, raw, 0, n, |p| (2 * p - n) as f64))
}

/// Folds batchnorm into a threshold on the int8 layer's raw accumulator,
/// which ranges over `[-128 * n, 127 * n]` for `n = K * C_in`.
pub fn fold_batchnorm_int8(bn: &BatchNorm, k: usize, c_in: usize) -> Result<ThresholdSpec, LayerError> {
    bn.check()?;
    let n = (k * c_in) as i64;
    let raw = bn.mu - bn.beta * bn.sigma / bn.gamma;
    Ok(fold(bn, raw, -128 * n, 127 * n, |a| a as f64))
}

/// Rounds the real crossing point `raw` to an integer threshold over the
/// accumulator range `[lo, hi]`, then settles the boundary against the
/// batchnorm expression itself so that float rounding at near-ties cannot
/// move it by one.
fn fold(bn: &BatchNorm, raw: f64, lo: i64, hi: i64, to_y: impl Fn(i64) -> f64) -> ThresholdSpec {
    let fires = |v: i64| bn.fires(to_y(v));
    let clamp = |v: f64| {
        if v.is_nan() {
            lo
        } else {
            v.clamp((lo - 1) as f64, (hi + 1) as f64) as i64
        }
    };
    let (mut t, direction) = if bn.gamma > 0.0 {
        (clamp(raw.ceil()), super::Direction::Geq)
    } else {
        (clamp(raw.floor()), super::Direction::Leq)
    };
    match direction {
        // smallest v in [lo, hi + 1] such that every v' >= v fires
        super::Direction::Geq => {
            while t > lo && fires(t - 1) {
                t -= 1;
            }
            while t <= hi && !fires(t) {
                t += 1;
            }
        }
        // largest v in [lo - 1, hi] such that every v' <= v fires
        super::Direction::Leq => {
            while t < hi && fires(t + 1) {
                t += 1;
            }
            while t >= lo && !fires(t) {
                t -= 1;
            }
        }
    }
    let threshold = t.clamp(i32::MIN as i64, i32::MAX as i64) as i32;
    ThresholdSpec { threshold, direction }
}
