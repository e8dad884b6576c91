//! Deliberately naive reference implementations.
//!
//! These exist to check the optimized paths, so they share nothing with them:
//! plain row-major triple loops, no packing, no corrections, no widening
//! tricks. Keep them boring.

use crate::error::Error;
use crate::quant::QuantizedMatrix;

/// Naive float product of row-major `a` (`m x d`) and `b` (`d x n`).
pub fn oracle_gemm_f32(a: &[f32], b: &[f32], m: usize, d: usize, n: usize) -> Vec<f32> {
    assert_eq!(a.len(), m * d);
    assert_eq!(b.len(), d * n);
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f32;
            for k in 0..d {
                acc += a[i * d + k] * b[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Naive i32 product of row-major `a` (`m x d`) and `b` (`d x n`).
pub fn oracle_gemm_i32(a: &[i32], b: &[i32], m: usize, d: usize, n: usize) -> Vec<i32> {
    assert_eq!(a.len(), m * d);
    assert_eq!(b.len(), d * n);
    let mut out = vec![0i32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0i32;
            for k in 0..d {
                acc += a[i * d + k] * b[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// The quantity a corrected quantized product must reproduce exactly:
/// `sum_k (w[i][k] - z_w) * (x[k][j] - z_x)`, summed directly in i32.
pub fn oracle_quantized_product(
    w: &QuantizedMatrix,
    x: &QuantizedMatrix,
) -> Result<Vec<i32>, Error> {
    if w.cols() != x.rows() {
        return Err(Error::DimensionMismatch {
            left: (w.rows(), w.cols()),
            right: (x.rows(), x.cols()),
        });
    }
    let z_w = w.params().zero_point as i32;
    let z_x = x.params().zero_point as i32;
    let (m, d, n) = (w.rows(), w.cols(), x.cols());
    let mut out = vec![0i32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0i32;
            for k in 0..d {
                acc += (w.get(i, k) as i32 - z_w) * (x.get(k, j) as i32 - z_x);
            }
            out[i * n + j] = acc;
        }
    }
    Ok(out)
}

/// Outcome of comparing a result against an oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub max_abs_diff: f64,
    /// Row/column of the first failing element, if any.
    pub first_mismatch: Option<(usize, usize)>,
    pub pass: bool,
}

/// Exact comparison of two i32 result matrices.
pub fn compare_i32(result: &[i32], oracle: &[i32], cols: usize) -> OracleReport {
    assert_eq!(result.len(), oracle.len());
    let mut max_abs_diff = 0.0f64;
    let mut first_mismatch = None;
    for (idx, (&r, &o)) in result.iter().zip(oracle).enumerate() {
        let diff = (r as f64 - o as f64).abs();
        max_abs_diff = max_abs_diff.max(diff);
        if r != o && first_mismatch.is_none() {
            first_mismatch = Some((idx / cols, idx % cols));
        }
    }
    OracleReport { max_abs_diff, first_mismatch, pass: first_mismatch.is_none() }
}

/// Tolerance comparison of two f32 result matrices. An element passes when
/// `|r - o| <= rel_tol * max(|r|, |o|, abs_floor)`; the floor keeps
/// near-cancelled sums from demanding impossible relative precision.
pub fn compare_f32(result: &[f32], oracle: &[f32], cols: usize, rel_tol: f32, abs_floor: f32) -> OracleReport {
    assert_eq!(result.len(), oracle.len());
    let mut max_abs_diff = 0.0f64;
    let mut first_mismatch = None;
    for (idx, (&r, &o)) in result.iter().zip(oracle).enumerate() {
        let diff = (r as f64 - o as f64).abs();
        max_abs_diff = max_abs_diff.max(diff);
        let bound = rel_tol as f64 * (r.abs().max(o.abs()).max(abs_floor)) as f64;
        let ok = r.is_finite() && o.is_finite() && diff <= bound;
        if !ok && first_mismatch.is_none() {
            first_mismatch = Some((idx / cols, idx % cols));
        }
    }
    OracleReport { max_abs_diff, first_mismatch, pass: first_mismatch.is_none() }
}
