//! One prepared, re-runnable workload per engine. A case owns its operands
//! so the timed region is nothing but the product itself; `regenerate`
//! refills the operands between repetitions so the processor cannot settle
//! into a value-dependent fast path, and `verify` checks the engine against
//! the naive reference on the current operands.

use anyhow::bail;
use nibblegemm::qgemm::{max_safe_depth, qgemm, qgemm_u8, AccumulatorMode, GemmConfig};
use nibblegemm::quant::{QuantParams, QuantizedMatrix};
use nibblegemm::reference::{
    compare_f32, compare_i32, oracle_gemm_f32, oracle_gemm_i32, oracle_quantized_product,
    OracleReport,
};
use rand::rngs::StdRng;
use rand::Rng;

use crate::config::Engine;

/// Plain float product with an i-k-j loop order, the shape a straightforward
/// cache-aware implementation takes. An independent code path from the
/// reference oracle (row-panel updates instead of per-element dots), though
/// both add along ascending k, so they normally agree bit-for-bit.
fn gemm_f32_ikj(a: &[f32], b: &[f32], m: usize, d: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for k in 0..d {
            let aik = a[i * d + k];
            let row = &b[k * n..(k + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in dst.iter_mut().zip(row) {
                *o += aik * bv;
            }
        }
    }
    out
}

fn checksum_f32(values: &[f32]) -> u32 {
    values.iter().fold(0u32, |acc, v| acc.wrapping_add(v.to_bits()))
}

fn checksum_i32(values: &[i32]) -> u32 {
    values.iter().fold(0u32, |acc, &v| acc.wrapping_add(v as u32))
}

fn random_quantized(rng: &mut StdRng, rows: usize, cols: usize, bits: u8) -> QuantizedMatrix {
    let qmax = if bits == 4 { 15u8 } else { 255 };
    let params = QuantParams::new(
        rng.random_range(0.01f32..1.0),
        rng.random_range(0..=qmax),
        bits,
    )
    .unwrap();
    let data = (0..rows * cols).map(|_| rng.random_range(0..=qmax)).collect();
    QuantizedMatrix::from_parts(rows, cols, data, params).unwrap()
}

/// A benchmarkable grid point: operands plus the engine that multiplies them.
pub enum PreparedCase {
    F32 { a: Vec<f32>, b: Vec<f32>, m: usize, d: usize, n: usize },
    I32 { a: Vec<i32>, b: Vec<i32>, m: usize, d: usize, n: usize },
    U8 { w: QuantizedMatrix, x: QuantizedMatrix },
    U4 { w: QuantizedMatrix, x: QuantizedMatrix, config: GemmConfig },
}

impl PreparedCase {
    /// Builds operands for `engine` at an `height x depth` by `depth x width`
    /// product. The 4-bit engine picks its accumulator mode from the depth
    /// and refuses depths past the extended bound.
    pub fn new(
        engine: Engine,
        height: usize,
        width: usize,
        depth: usize,
        rng: &mut StdRng,
    ) -> anyhow::Result<PreparedCase> {
        Ok(match engine {
            Engine::F32 => PreparedCase::F32 {
                a: (0..height * depth).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
                b: (0..depth * width).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
                m: height,
                d: depth,
                n: width,
            },
            Engine::I32 => PreparedCase::I32 {
                a: (0..height * depth).map(|_| rng.random_range(0..256)).collect(),
                b: (0..depth * width).map(|_| rng.random_range(0..256)).collect(),
                m: height,
                d: depth,
                n: width,
            },
            Engine::U8 => PreparedCase::U8 {
                w: random_quantized(rng, height, depth, 8),
                x: random_quantized(rng, depth, width, 8),
            },
            Engine::U4 => {
                let kernel_height = if height % 24 == 0 { 24 } else { 8 };
                let mode = if depth <= max_safe_depth(4, AccumulatorMode::Signed16)? {
                    AccumulatorMode::Signed16
                } else if depth <= max_safe_depth(4, AccumulatorMode::Unsigned16Extended)? {
                    AccumulatorMode::Unsigned16Extended
                } else {
                    bail!(
                        "depth {depth} exceeds the 16-bit accumulator bound ({}); \
                         the 4-bit engine cannot run this grid point",
                        max_safe_depth(4, AccumulatorMode::Unsigned16Extended)?
                    );
                };
                let config = GemmConfig {
                    kernel_height,
                    accumulator_mode: mode,
                    bits: 4,
                    unchecked: false,
                };
                PreparedCase::U4 {
                    w: random_quantized(rng, height, depth, 4),
                    x: random_quantized(rng, depth, width, 4),
                    config,
                }
            }
        })
    }

    /// Label for the CSV row; `u4` becomes `u4ext` when the depth forced the
    /// extended accumulator mode.
    pub fn label(&self) -> &'static str {
        match self {
            PreparedCase::F32 { .. } => "f32",
            PreparedCase::I32 { .. } => "i32",
            PreparedCase::U8 { .. } => "u8",
            PreparedCase::U4 { config, .. } => match config.accumulator_mode {
                AccumulatorMode::Unsigned16Extended => "u4ext",
                _ => "u4",
            },
        }
    }

    /// Refills the operand values in place (shapes and scales stay fixed).
    pub fn regenerate(&mut self, rng: &mut StdRng) {
        match self {
            PreparedCase::F32 { a, b, .. } => {
                a.iter_mut().for_each(|v| *v = rng.random_range(-1.0f32..1.0));
                b.iter_mut().for_each(|v| *v = rng.random_range(-1.0f32..1.0));
            }
            PreparedCase::I32 { a, b, .. } => {
                a.iter_mut().for_each(|v| *v = rng.random_range(0..256));
                b.iter_mut().for_each(|v| *v = rng.random_range(0..256));
            }
            PreparedCase::U8 { w, x } | PreparedCase::U4 { w, x, .. } => {
                refill(w, rng);
                refill(x, rng);
            }
        }
    }

    /// Runs the engine once and folds the result into a checksum.
    pub fn execute(&self) -> u32 {
        match self {
            PreparedCase::F32 { a, b, m, d, n } => checksum_f32(&gemm_f32_ikj(a, b, *m, *d, *n)),
            PreparedCase::I32 { a, b, m, d, n } => checksum_i32(&oracle_gemm_i32(a, b, *m, *d, *n)),
            PreparedCase::U8 { w, x } => checksum_i32(&qgemm_u8(w, x).unwrap().values),
            PreparedCase::U4 { w, x, config } => checksum_i32(&qgemm(w, x, config).unwrap().values),
        }
    }

    /// Compares the engine's current result against the naive reference.
    /// The i32 engine *is* the reference, so its report is trivially clean
    /// and the caller annotates it as such.
    pub fn verify(&self) -> OracleReport {
        match self {
            PreparedCase::F32 { a, b, m, d, n } => {
                let ours = gemm_f32_ikj(a, b, *m, *d, *n);
                let oracle = oracle_gemm_f32(a, b, *m, *d, *n);
                // Relative tolerance for reassociated float sums; the floor
                // tracks the natural magnitude of a length-d reduction of
                // unit-range terms so near-cancelled outputs don't trip it.
                compare_f32(&ours, &oracle, *n, 1e-4, (*d as f32).sqrt())
            }
            PreparedCase::I32 { a, b, m, d, n } => {
                let r = oracle_gemm_i32(a, b, *m, *d, *n);
                compare_i32(&r, &r, *n)
            }
            PreparedCase::U8 { w, x } => {
                let ours = qgemm_u8(w, x).unwrap();
                let oracle = oracle_quantized_product(w, x).unwrap();
                compare_i32(&ours.values, &oracle, x.cols())
            }
            PreparedCase::U4 { w, x, config } => {
                let ours = qgemm(w, x, config).unwrap();
                let oracle = oracle_quantized_product(w, x).unwrap();
                compare_i32(&ours.values, &oracle, x.cols())
            }
        }
    }

    /// True when `verify` is a self-comparison rather than a real check.
    pub fn is_reference_engine(&self) -> bool {
        matches!(self, PreparedCase::I32 { .. })
    }
}

fn refill(m: &mut QuantizedMatrix, rng: &mut StdRng) {
    let qmax = m.params().qmax();
    let (rows, cols, params) = (m.rows(), m.cols(), *m.params());
    let data = (0..rows * cols).map(|_| rng.random_range(0..=qmax)).collect();
    *m = QuantizedMatrix::from_parts(rows, cols, data, params).unwrap();
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn every_engine_verifies_on_a_small_case() {
        let mut rng = StdRng::seed_from_u64(7);
        for engine in [Engine::F32, Engine::I32, Engine::U8, Engine::U4] {
            let case = PreparedCase::new(engine, 9, 13, 20, &mut rng).unwrap();
            let report = case.verify();
            assert!(report.pass, "{engine} failed: {report:?}");
        }
    }

    #[test]
    fn u4_switches_to_extended_label_past_the_signed_bound() {
        let mut rng = StdRng::seed_from_u64(8);
        let case = PreparedCase::new(Engine::U4, 8, 4, 145, &mut rng).unwrap();
        assert_eq!(case.label(), "u4");
        let case = PreparedCase::new(Engine::U4, 8, 4, 146, &mut rng).unwrap();
        assert_eq!(case.label(), "u4ext");
        assert!(case.verify().pass);
        assert!(PreparedCase::new(Engine::U4, 8, 4, 292, &mut rng).is_err());
    }

    #[test]
    fn checksums_stable_under_execute_but_change_on_regenerate() {
        let mut rng = StdRng::seed_from_u64(9);
        let mut case = PreparedCase::new(Engine::U4, 8, 8, 10, &mut rng).unwrap();
        let first = case.execute();
        assert_eq!(case.execute(), first, "execute must be pure");
        case.regenerate(&mut rng);
        // Equal checksums after a refill are possible but astronomically
        // unlikely; treat as a bug.
        assert_ne!(case.execute(), first);
    }

    #[test]
    fn big_rows_pick_the_tall_kernel() {
        let mut rng = StdRng::seed_from_u64(10);
        match PreparedCase::new(Engine::U4, 24, 4, 10, &mut rng).unwrap() {
            PreparedCase::U4 { config, .. } => assert_eq!(config.kernel_height, 24),
            _ => unreachable!(),
        }
        match PreparedCase::new(Engine::U4, 8, 4, 10, &mut rng).unwrap() {
            PreparedCase::U4 { config, .. } => assert_eq!(config.kernel_height, 8),
            _ => unreachable!(),
        }
    }
}
