use super::RfError;

pub const WINDOW: usize = 32;
pub const AXES: usize = 3;
pub const FEATURES_PER_AXIS: usize = 7;
pub const N_FEATURES: usize = AXES * FEATURES_PER_AXIS;

/// Per-axis features of a `32 x 3` time-major window, in the order
/// average, variance, energy, max, min, peak-to-peak, zero crossings.
/// Feature `j` of axis `a` is at `a * 7 + j`.
///
/// Variance is the population variance. A zero crossing is a pair of
/// consecutive samples whose product is negative, so zeros never count.
/// Sums are exact integers; each feature is the correctly rounded `f64` of
/// its exact value.
pub fn extract_features(window: &[i32]) -> Result<[f64; N_FEATURES], RfError> {
    if window.len() != WINDOW * AXES {
        return Err(RfError::WindowShape {
            expected: WINDOW * AXES,
            actual: window.len(),
        });
    }
    let mut out = [0.0; N_FEATURES];
    for a in 0..AXES {
        let xs = || window.iter().skip(a).step_by(AXES).map(|&v| v as i64);
        let sum: i64 = xs().sum();
        let sum_sq: i128 = xs().map(|v| (v * v) as i128).sum();
        let max = xs().max().unwrap();
        let min = xs().min().unwrap();
        let zc = xs().zip(xs().skip(1)).filter(|&(p, q)| (p < 0 && q > 0) || (p > 0 && q < 0)).count();
        let n = WINDOW as i128;
        // var = (n * sum_sq - sum^2) / n^2, and n is a power of two
        let var_num = n * sum_sq - (sum as i128) * (sum as i128);
        let f = &mut out[a * FEATURES_PER_AXIS..(a + 1) * FEATURES_PER_AXIS];
        f[0] = sum as f64 / WINDOW as f64;
        f[1] = var_num as f64 / (n * n) as f64;
        f[2] = sum_sq as f64;
        f[3] = max as f64;
        f[4] = min as f64;
        f[5] = (max - min) as f64;
        f[6] = zc as f64;
    }
    Ok(out)
}

/// Affine map from real features to int8: `q = round((f - zero) / scale)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureQuantizer {
    pub scale: Vec<f32>,
    pub zero: Vec<f32>,
}

impl FeatureQuantizer {
    pub fn new(scale: Vec<f32>, zero: Vec<f32>) -> Result<Self, RfError> {
        if scale.len() != zero.len() {
            return Err(RfError::QuantizerWidth {
                expected: scale.len(),
                actual: zero.len(),
            });
        }
        if let Some(feature) = scale.iter().zip(&zero).position(|(s, z)| !(s.is_finite() && *s > 0.0 && z.is_finite())) {
            return Err(RfError::BadScale { feature });
        }
        Ok(Self { scale, zero })
    }

    /// Scale 1, zero 0: features are already int8.
    pub fn identity(n: usize) -> Self {
        Self {
            scale: vec![1.0; n],
            zero: vec![0.0; n],
        }
    }

    /// Maps each feature's observed `[min, max]` onto `[-128, 127]`.
    pub fn calibrate<'a>(rows: impl IntoIterator<Item = &'a [f64]>, n: usize) -> Self {
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for row in rows {
            for j in 0..n {
                lo[j] = lo[j].min(row[j]);
                hi[j] = hi[j].max(row[j]);
            }
        }
        let mut scale = Vec::with_capacity(n);
        let mut zero = Vec::with_capacity(n);
        for j in 0..n {
            let (l, h) = if lo[j] <= hi[j] { (lo[j], hi[j]) } else { (0.0, 0.0) };
            let s = if h > l { ((h - l) / 255.0) as f32 } else { 1.0 };
            let s = if s > 0.0 && s.is_finite() { s } else { 1.0 };
            scale.push(s);
            zero.push((l + 128.0 * s as f64) as f32);
        }
        Self { scale, zero }
    }

    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }

    /// Quantizes one value exactly: `(f - zero) / scale` rounded half away
    /// from zero and clamped to `[-128, 127]`, decided without rounding
    /// error in the subtraction or division.
    pub fn quantize_one(&self, j: usize, f: f64) -> i8 {
        let (scale, zero) = (self.scale[j] as f64, self.zero[j] as f64);
        let approx = ((f - zero) / scale).round();
        let mut q = if approx.is_nan() { 0.0 } else { approx.clamp(-128.0, 127.0) };
        // exact sign of (f - zero) - b * scale
        let side = |b: f64| exact_sign(f, zero, b, scale);
        // moves up past b = q + 0.5 when v > b, or v == b with b > 0
        while q < 127.0 {
            let b = q + 0.5;
            match side(b) {
                1 => q += 1.0,
                0 if b > 0.0 => q += 1.0,
                _ => break,
            }
        }
        while q > -128.0 {
            let b = q - 0.5;
            match side(b) {
                -1 => q -= 1.0,
                0 if b < 0.0 => q -= 1.0,
                _ => break,
            }
        }
        q as i8
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Sign of `f - zero - b * scale` in exact arithmetic, using error-free
/// transformations to expand the expression into non-overlapping terms.
fn exact_sign(f: f64, zero: f64, b: f64, scale: f64) -> i32 {
    let p = b * scale;
    let e = b.mul_add(scale, -p);
    let mut expansion: Vec<f64> = Vec::with_capacity(4);
    for term in [f, -zero, -p, -e] {
        let mut q = term;
        let mut next = Vec::with_capacity(expansion.len() + 1);
        for &h in &expansion {
            let (s, err) = two_sum(q, h);
            if err != 0.0 {
                next.push(err);
            }
            q = s;
        }
        next.push(q);
        expansion = next;
    }
    match expansion.iter().rev().find(|&&x| x != 0.0) {
        Some(&x) if x > 0.0 => 1,
        Some(_) => -1,
        None => 0,
    }
}

/// Quantizes a feature vector with `q`.
pub fn quantize_features(features: &[f64], q: &FeatureQuantizer) -> Result<Vec<i8>, RfError> {
    if features.len() != q.len() {
        return Err(RfError::FeatureCount {
            expected: q.len(),
            actual: features.len(),
        });
    }
    if let Some(feature) = q.scale.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(RfError::BadScale { feature });
    }
    Ok(features.iter().enumerate().map(|(j, &f)| q.quantize_one(j, f)).collect())
}
