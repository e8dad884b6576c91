//! Linear quantization of real values onto low-bit unsigned grids.
//!
//! A tensor is mapped onto `2^p` levels through a positive `scale` and an
//! unsigned integer `zero_point`:
//!
//! ```text
//! q = clamp(floor(v / scale) + zero_point, 0, 2^p - 1)
//! v ~ scale * (q - zero_point)
//! ```
//!
//! The scale spans the value range extended to include zero, so real `0.0`
//! always lands exactly on the grid: it quantizes to `zero_point` and
//! dequantizes back to exactly `0.0`. That property is what lets ReLU be
//! applied directly to integer activations later on.

use crate::error::Error;

/// Slack added before `floor` when converting a value to grid steps, in units
/// of one step. Rounding the scale to f32 perturbs `v / scale` by a few 1e-5
/// steps at most; values that sit exactly on a step boundary in exact
/// arithmetic must land in the upper cell or the round-trip error reaches a
/// full `scale` instead of staying strictly below it.
const FLOOR_GUARD: f64 = 1e-4;

fn floor_steps(steps: f64) -> i64 {
    (steps + FLOOR_GUARD).floor() as i64
}

fn validate_bits(bits: u8) -> Result<(), Error> {
    match bits {
        4 | 8 => Ok(()),
        other => Err(Error::InvalidBits(other)),
    }
}

/// Largest representable level for a bit width: `2^bits - 1`.
pub fn max_level(bits: u8) -> u8 {
    ((1u16 << bits) - 1) as u8
}

/// Scale, zero-point and bit width of one quantized tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub scale: f32,
    pub zero_point: u8,
    pub bits: u8,
}

impl QuantParams {
    pub fn new(scale: f32, zero_point: u8, bits: u8) -> Result<QuantParams, Error> {
        validate_bits(bits)?;
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::InvalidScale(scale));
        }
        let qmax = max_level(bits);
        if zero_point > qmax {
            return Err(Error::ZeroPointOutOfRange { zero_point, qmax });
        }
        Ok(QuantParams { scale, zero_point, bits })
    }

    /// Largest level representable at this width.
    pub fn qmax(&self) -> u8 {
        max_level(self.bits)
    }
}

/// Derive quantization parameters covering `values` at width `bits`.
///
/// The range is `[min(values, 0), max(values, 0)]`, so the grid always
/// contains zero and the zero-point is never negative. A constant-zero input
/// has no spread to map; it gets `scale = 1.0`, `zero_point = 0`, under which
/// every value still round-trips exactly.
pub fn compute_quant_params(values: &[f32], bits: u8) -> Result<QuantParams, Error> {
    validate_bits(bits)?;
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut lo = 0.0f32;
    let mut hi = 0.0f32;
    for (index, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let qmax = max_level(bits);
    if hi == lo {
        // Only possible when every value is exactly zero.
        return Ok(QuantParams { scale: 1.0, zero_point: 0, bits });
    }
    let scale = (hi - lo) / qmax as f32;
    let zero_point = (-floor_steps(lo as f64 / scale as f64)).clamp(0, qmax as i64) as u8;
    Ok(QuantParams { scale, zero_point, bits })
}

/// Quantize a slice of values with the given parameters.
pub fn quantize_values(values: &[f32], params: &QuantParams) -> Vec<u8> {
    let scale = params.scale as f64;
    let zero_point = params.zero_point as i64;
    let qmax = params.qmax() as i64;
    values
        .iter()
        .map(|&v| (floor_steps(v as f64 / scale) + zero_point).clamp(0, qmax) as u8)
        .collect()
}

/// Map levels back to real values: `scale * (q - zero_point)`.
pub fn dequantize_values(levels: &[u8], params: &QuantParams) -> Vec<f32> {
    let zero_point = params.zero_point as i32;
    levels
        .iter()
        .map(|&q| params.scale * (q as i32 - zero_point) as f32)
        .collect()
}

/// A row-major matrix of quantized levels together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
    params: QuantParams,
}

impl QuantizedMatrix {
    /// Build from already-quantized levels. Every level must fit the width
    /// declared by `params`.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        data: Vec<u8>,
        params: QuantParams,
    ) -> Result<QuantizedMatrix, Error> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch { expected: rows * cols, actual: data.len() });
        }
        let qmax = params.qmax();
        if let Some(index) = data.iter().position(|&q| q > qmax) {
            return Err(Error::ValueOutOfRange { index, value: data[index], qmax });
        }
        Ok(QuantizedMatrix { rows, cols, data, params })
    }

    /// Derive parameters from `values` and quantize them in one step.
    pub fn from_values(
        values: &[f32],
        rows: usize,
        cols: usize,
        bits: u8,
    ) -> Result<QuantizedMatrix, Error> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch { expected: rows * cols, actual: values.len() });
        }
        let params = compute_quant_params(values, bits)?;
        let data = quantize_values(values, &params);
        QuantizedMatrix::from_parts(rows, cols, data, params)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn params(&self) -> &QuantParams {
        &self.params
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col]
    }

    /// Dequantize the whole matrix back to row-major floats.
    pub fn dequantize(&self) -> Vec<f32> {
        dequantize_values(&self.data, &self.params)
    }
}
