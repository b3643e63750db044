//! Affine INT8 quantization: parameter selection, quantize/dequantize,
//! calibration statistics and the fixed-point requantization used by the
//! integer kernels.
//!
//! Activations use asymmetric per-tensor parameters, weights use symmetric
//! per-output-channel parameters (zero point 0), and biases are INT32 with
//! `bias_scale = input_scale * weight_scale`. Every real-to-integer rounding
//! is half-away-from-zero.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const QMIN: i32 = -128;
pub const QMAX: i32 = 127;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Granularity {
    PerTensor,
    /// One entry per element of the last (channel) axis.
    PerChannel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantParams {
    granularity: Granularity,
    scales: Vec<f64>,
    zero_points: Vec<i32>,
}

impl QuantParams {
    pub fn per_tensor(scale: f64, zero_point: i32) -> Result<Self> {
        Self::new(Granularity::PerTensor, vec![scale], vec![zero_point])
    }

    /// Symmetric per-channel parameters; zero points are all 0.
    pub fn per_channel(scales: Vec<f64>) -> Result<Self> {
        let zps = vec![0; scales.len()];
        Self::new(Granularity::PerChannel, scales, zps)
    }

    pub fn new(granularity: Granularity, scales: Vec<f64>, zero_points: Vec<i32>) -> Result<Self> {
        if scales.is_empty() || scales.len() != zero_points.len() {
            return Err(Error::InvalidQuantParams(format!(
                "{} scales vs {} zero points",
                scales.len(),
                zero_points.len()
            )));
        }
        if granularity == Granularity::PerTensor && scales.len() != 1 {
            return Err(Error::InvalidQuantParams(
                "per-tensor params need exactly one scale".into(),
            ));
        }
        if let Some(s) = scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidQuantParams(format!(
                "scale {s} is not positive"
            )));
        }
        if let Some(z) = zero_points.iter().find(|z| !(QMIN..=QMAX).contains(*z)) {
            return Err(Error::InvalidQuantParams(format!(
                "zero point {z} outside int8"
            )));
        }
        if granularity == Granularity::PerChannel && zero_points.iter().any(|&z| z != 0) {
            return Err(Error::InvalidQuantParams(
                "per-channel params must be symmetric".into(),
            ));
        }
        Ok(QuantParams {
            granularity,
            scales,
            zero_points,
        })
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn is_per_channel(&self) -> bool {
        self.granularity == Granularity::PerChannel
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn zero_points(&self) -> &[i32] {
        &self.zero_points
    }

    #[inline]
    pub fn scale(&self, channel: usize) -> f64 {
        match self.granularity {
            Granularity::PerTensor => self.scales[0],
            Granularity::PerChannel => self.scales[channel],
        }
    }

    #[inline]
    pub fn zero_point(&self, channel: usize) -> i32 {
        match self.granularity {
            Granularity::PerTensor => self.zero_points[0],
            Granularity::PerChannel => self.zero_points[channel],
        }
    }

    #[inline]
    pub fn quantize(&self, r: f64, channel: usize) -> i8 {
        quantize(r, self, channel)
    }

    #[inline]
    pub fn dequantize(&self, q: i32, channel: usize) -> f64 {
        (q - self.zero_point(channel)) as f64 * self.scale(channel)
    }
}

/// `clamp(round(r / scale) + zero_point, -128, 127)`.
#[inline]
pub fn quantize(r: f64, params: &QuantParams, channel: usize) -> i8 {
    let v = (r / params.scale(channel)).round() + params.zero_point(channel) as f64;
    // NaN falls through both comparisons and saturating casts map it to 0
    v.clamp(QMIN as f64, QMAX as f64) as i8
}

#[inline]
pub fn dequantize(q: i8, params: &QuantParams, channel: usize) -> f64 {
    params.dequantize(q as i32, channel)
}

/// Asymmetric per-tensor parameters covering `[rmin, rmax]`, widened to
/// contain 0 so that real zero is exactly representable.
pub fn params_from_range(rmin: f64, rmax: f64) -> Result<QuantParams> {
    if !rmin.is_finite() || !rmax.is_finite() {
        return Err(Error::NonFinite);
    }
    if rmin > rmax {
        return Err(Error::InvalidRange(rmin, rmax));
    }
    if rmin == rmax {
        return QuantParams::per_tensor(1.0, 0);
    }
    let lo = rmin.min(0.0);
    let hi = rmax.max(0.0);
    let scale = (hi - lo) / 255.0;
    let zp = (QMIN as f64 - lo / scale)
        .round()
        .clamp(QMIN as f64, QMAX as f64) as i32;
    QuantParams::per_tensor(scale, zp)
}

/// Like [`params_from_range`] but the range is stretched about zero until
/// the scale reaches `min_scale`. Used to keep requantization multipliers
/// strictly below one.
pub fn params_from_range_min_scale(rmin: f64, rmax: f64, min_scale: f64) -> Result<QuantParams> {
    let p = params_from_range(rmin, rmax)?;
    let scale = p.scale(0);
    if scale >= min_scale {
        return Ok(p);
    }
    let lo = rmin.min(0.0);
    let hi = rmax.max(0.0);
    if lo == hi {
        // all-zero range: any zero point works, keep the lowest code for 0
        return QuantParams::per_tensor(min_scale, QMIN);
    }
    let f = min_scale / scale;
    params_from_range(lo * f, hi * f).and_then(|q| {
        if q.scale(0) >= min_scale {
            Ok(q)
        } else {
            // floating round-off left us a hair short
            QuantParams::per_tensor(min_scale, q.zero_point(0))
        }
    })
}

/// Symmetric scales per last-axis channel: `max|w_c| / 127`, or 1 for an
/// all-zero channel.
pub fn symmetric_channel_scales(data: &[f32], channels: usize) -> Vec<f64> {
    let mut absmax = vec![0.0f64; channels];
    for (i, &w) in data.iter().enumerate() {
        let c = i % channels;
        absmax[c] = absmax[c].max((w as f64).abs());
    }
    absmax
        .into_iter()
        .map(|m| if m > 0.0 { m / QMAX as f64 } else { 1.0 })
        .collect()
}

/// Quantizes a real weight tensor per output channel (last axis).
pub fn quantize_weights(w: &Tensor) -> Result<Tensor> {
    let data = w.as_f32()?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let shape = w.shape();
    let params = QuantParams::per_channel(symmetric_channel_scales(data, shape.c))?;
    let q = data
        .iter()
        .enumerate()
        .map(|(i, &v)| params.quantize(v as f64, i % shape.c))
        .collect();
    Tensor::from_i8(shape, q, params)
}

/// Quantizes a real bias vector to INT32 at `input_scale * weight_scale[c]`.
pub fn quantize_bias(bias: &Tensor, input: &QuantParams, weights: &QuantParams) -> Result<Tensor> {
    let data = bias.as_f32()?;
    let shape = bias.shape();
    let scales: Vec<f64> = (0..shape.c)
        .map(|c| input.scale(0) * weights.scale(c))
        .collect();
    let q = data
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let v = (b as f64 / scales[i % shape.c]).round();
            if !v.is_finite() {
                return Err(Error::NonFinite);
            }
            Ok(v.clamp(i32::MIN as f64, i32::MAX as f64) as i32)
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_i32(shape, q, QuantParams::per_channel(scales)?)
}

/// Fixed-point representation of a real multiplier `M = m0 * 2^-shift`,
/// with `m0` in [0.5, 1) stored at 31 fractional bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RequantMultiplier {
    pub mantissa: i32,
    pub shift: i32,
}

impl RequantMultiplier {
    pub fn to_f64(self) -> f64 {
        self.mantissa as f64 / (1u64 << 31) as f64 * (-(self.shift as f64)).exp2()
    }
}

pub fn compute_requant(real_multiplier: f64) -> Result<RequantMultiplier> {
    // written as a negated range test so NaN is rejected too
    if !(real_multiplier > 0.0 && real_multiplier < 1.0) {
        return Err(Error::MultiplierOutOfRange(real_multiplier));
    }
    let mut m0 = real_multiplier;
    let mut shift = 0i32;
    while m0 < 0.5 {
        m0 *= 2.0;
        shift += 1;
    }
    let mut mantissa = (m0 * (1u64 << 31) as f64).round() as i64;
    if mantissa == 1i64 << 31 {
        mantissa >>= 1;
        shift -= 1;
    }
    if shift < 0 {
        return Err(Error::MultiplierOutOfRange(real_multiplier));
    }
    Ok(RequantMultiplier {
        mantissa: mantissa as i32,
        shift,
    })
}

/// High 32 bits of `2 * a * b`, rounded, saturating the single overflow case.
#[inline]
pub fn saturating_rounding_doubling_high_mul(a: i32, b: i32) -> i32 {
    if a == i32::MIN && b == i32::MIN {
        return i32::MAX;
    }
    let ab = a as i64 * b as i64;
    let nudge = if ab >= 0 {
        1i64 << 30
    } else {
        1 - (1i64 << 30)
    };
    ((ab + nudge) / (1i64 << 31)) as i32
}

/// `x / 2^exponent` rounded half away from zero.
#[inline]
pub fn rounding_divide_by_pot(x: i32, exponent: i32) -> i32 {
    if exponent <= 0 {
        return x;
    }
    if exponent >= 63 {
        return 0;
    }
    let x = x as i64;
    let mask = (1i64 << exponent) - 1;
    let remainder = x & mask;
    let threshold = (mask >> 1) + i64::from(x < 0);
    ((x >> exponent) + i64::from(remainder > threshold)) as i32
}

/// `round(acc * M)` in pure integer arithmetic.
#[inline]
pub fn multiply_by_quantized_multiplier(acc: i32, rm: RequantMultiplier) -> i32 {
    rounding_divide_by_pot(
        saturating_rounding_doubling_high_mul(acc, rm.mantissa),
        rm.shift,
    )
}

#[inline]
pub fn apply_requant(acc: i32, rm: RequantMultiplier, out_zp: i32) -> i8 {
    let v = multiply_by_quantized_multiplier(acc, rm) as i64 + out_zp as i64;
    v.clamp(QMIN as i64, QMAX as i64) as i8
}

/// Integer division rounded half away from zero.
#[inline]
pub fn div_round_half_away(num: i64, den: i64) -> i64 {
    debug_assert!(den > 0);
    if num >= 0 {
        (num + den / 2) / den
    } else {
        -((-num + den / 2) / den)
    }
}

/// Running min/max over calibration activations.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CalibrationStats {
    pub min: f64,
    pub max: f64,
    pub count: u64,
}

impl CalibrationStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, t: &Tensor) -> Result<()> {
        self.observe_slice(t.as_f32()?)
    }

    pub fn observe_slice(&mut self, data: &[f32]) -> Result<()> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in data {
            if v.is_nan() {
                return Err(Error::NonFinite);
            }
            lo = lo.min(v as f64);
            hi = hi.max(v as f64);
        }
        if !data.is_empty() {
            if self.count == 0 {
                self.min = lo;
                self.max = hi;
            } else {
                self.min = self.min.min(lo);
                self.max = self.max.max(hi);
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn params(&self) -> Result<QuantParams> {
        if self.count == 0 {
            return Err(Error::EmptyCalibrationSet);
        }
        params_from_range(self.min, self.max)
    }
}

/// Quantizes a real activation tensor with per-tensor params.
pub fn quantize_tensor(t: &Tensor, params: &QuantParams) -> Result<Tensor> {
    let data = t.as_f32()?;
    let q = data.iter().map(|&v| params.quantize(v as f64, 0)).collect();
    Tensor::from_i8(t.shape(), q, params.clone())
}

pub fn dequantize_tensor(t: &Tensor) -> Result<Tensor> {
    t.as_i8()?;
    Ok(t.to_real())
}

/// Shape helper for 1x1x1xC vectors (biases, pooled features).
pub fn vector_shape(c: usize) -> Shape {
    Shape::new(1, 1, 1, c)
}
