//! Quantized matrix product with zero-point corrections.
//!
//! For `W` (`M x D`) and `X` (`D x N`) quantized with zero-points `z_w`,
//! `z_x`, the integer result is
//!
//! ```text
//! r[i][j] = sum_k w[i][k] * x[k][j]
//!         - z_w * colsum(x, j) - z_x * rowsum(w, i) + D * z_w * z_x
//! ```
//!
//! which equals `sum_k (w[i][k] - z_w) * (x[k][j] - z_x)` exactly. Only the
//! first term touches `O(M*N*D)` work and it is pure unsigned
//! multiply-accumulate, so it runs on the packed 16-bit-lane micro-kernels;
//! the corrections are `O(M*N)` integer adds from the depth sums the packing
//! step collected. The result carries zero-point 0 and scale `s_w * s_x`.
//!
//! For a 4-bit product the largest first-term lane value is `D * 225`, which
//! bounds the usable depth: 145 when results must stay within i16, 291 when
//! the full unsigned 16-bit range may be used. 8-bit operands skip the packed
//! kernels and accumulate in i32 directly, good through depth 33025.

use crate::error::Error;
use crate::kernel::{self, AccumulatorTile, BIG_KERNEL_HEIGHT, SMALL_KERNEL_HEIGHT, TILE_WIDTH};
use crate::pack::{pack_lhs, pack_rhs, PackedLhs};
use crate::quant::{QuantParams, QuantizedMatrix};

/// How first-term accumulators are held and interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccumulatorMode {
    /// 16-bit lanes read as non-negative values up to i16::MAX (depth <= 145
    /// at 4 bits). Matches engines that later shift into signed arithmetic.
    Signed16,
    /// 16-bit lanes using the full unsigned range (depth <= 291 at 4 bits).
    Unsigned16Extended,
    /// Plain 32-bit accumulation for 8-bit operands (depth <= 33025).
    I32,
}

impl AccumulatorMode {
    pub fn name(self) -> &'static str {
        match self {
            AccumulatorMode::Signed16 => "signed16",
            AccumulatorMode::Unsigned16Extended => "unsigned16ext",
            AccumulatorMode::I32 => "i32",
        }
    }
}

/// Largest reduction depth that cannot wrap the accumulator for worst-case
/// operands at the given width.
pub fn max_safe_depth(bits: u8, mode: AccumulatorMode) -> Result<usize, Error> {
    let qmax = match bits {
        4 | 8 => (1usize << bits) - 1,
        other => return Err(Error::InvalidBits(other)),
    };
    let headroom = match (bits, mode) {
        (4, AccumulatorMode::Signed16) => (1usize << 15) - 1,
        (4, AccumulatorMode::Unsigned16Extended) => (1usize << 16) - 1,
        (8, AccumulatorMode::I32) => (1usize << 31) - 1,
        (_, mode) => return Err(Error::InvalidModeForBits { bits, mode: mode.name() }),
    };
    Ok(headroom / (qmax * qmax))
}

/// Largest input channel count a quantized convolution can feed into an
/// accumulator of `acc_bits` (signed) when values are quantized to `q_bits`:
/// `floor(floor((2^(acc_bits-1) - 1) / (2^q_bits - 1)^2) / (kh * kw))`.
pub fn conv_channel_limit(q_bits: u32, acc_bits: u32, kh: usize, kw: usize) -> usize {
    assert!(q_bits >= 1 && q_bits <= 16, "q_bits out of range: {q_bits}");
    assert!(acc_bits >= 2 && acc_bits <= 62, "acc_bits out of range: {acc_bits}");
    assert!(kh >= 1 && kw >= 1, "kernel must be at least 1x1");
    let qmax = (1u64 << q_bits) - 1;
    let headroom = (1u64 << (acc_bits - 1)) - 1;
    ((headroom / (qmax * qmax)) as usize) / (kh * kw)
}

/// Configuration of one quantized product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GemmConfig {
    /// Row-panel height for the packed path, 8 or 24. Ignored at 8 bits.
    pub kernel_height: usize,
    pub accumulator_mode: AccumulatorMode,
    /// Operand width, 4 or 8.
    pub bits: u8,
    /// Skip the depth overflow guard. Lanes then wrap modulo their width on
    /// deep inputs instead of failing fast.
    pub unchecked: bool,
}

impl GemmConfig {
    /// 4-bit operands, 16-bit lanes within i16 range, 8-row panels.
    pub fn u4(kernel_height: usize) -> GemmConfig {
        GemmConfig {
            kernel_height,
            accumulator_mode: AccumulatorMode::Signed16,
            bits: 4,
            unchecked: false,
        }
    }

    /// 4-bit operands using the full unsigned 16-bit lane range.
    pub fn u4_extended(kernel_height: usize) -> GemmConfig {
        GemmConfig {
            accumulator_mode: AccumulatorMode::Unsigned16Extended,
            ..GemmConfig::u4(kernel_height)
        }
    }

    /// 8-bit operands with i32 accumulation.
    pub fn u8_i32() -> GemmConfig {
        GemmConfig {
            kernel_height: SMALL_KERNEL_HEIGHT,
            accumulator_mode: AccumulatorMode::I32,
            bits: 8,
            unchecked: false,
        }
    }

    pub fn unchecked(mut self) -> GemmConfig {
        self.unchecked = true;
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.kernel_height != SMALL_KERNEL_HEIGHT && self.kernel_height != BIG_KERNEL_HEIGHT {
            return Err(Error::InvalidKernelHeight(self.kernel_height));
        }
        // Rejects unsupported widths and width/mode combinations.
        max_safe_depth(self.bits, self.accumulator_mode)?;
        Ok(())
    }

    fn guard_depth(&self, depth: usize) -> Result<(), Error> {
        let max = max_safe_depth(self.bits, self.accumulator_mode)?;
        if !self.unchecked && depth > max {
            return Err(Error::DepthOverflowRisk { depth, max });
        }
        Ok(())
    }
}

/// Integer product after zero-point correction. Values are exact
/// `sum_k (w - z_w)(x - z_x)` per element; the implied zero-point is 0 and
/// `result_scale` is the product of the operand scales.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedResult {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<i32>,
    pub result_scale: f32,
}

impl CorrectedResult {
    pub fn get(&self, row: usize, col: usize) -> i32 {
        debug_assert!(row < self.rows && col < self.cols);
        self.values[row * self.cols + col]
    }

    /// Real-valued view of the result: `result_scale * value`.
    pub fn dequantize(&self) -> Vec<f32> {
        self.values.iter().map(|&v| self.result_scale * v as f32).collect()
    }
}

/// Multiply two quantized matrices, packing the left operand on the fly.
pub fn qgemm(
    w: &QuantizedMatrix,
    x: &QuantizedMatrix,
    config: &GemmConfig,
) -> Result<CorrectedResult, Error> {
    config.validate()?;
    check_operands(w.params(), (w.rows(), w.cols()), x, config)?;
    match config.accumulator_mode {
        AccumulatorMode::I32 => qgemm_wide(w, x, config),
        _ => {
            let lhs = pack_lhs(w, config.kernel_height)?;
            packed_product(&lhs, w.params(), x, config)
        }
    }
}

/// Multiply with an already-packed left operand (cached weights).
pub fn qgemm_prepacked(
    lhs: &PackedLhs,
    w_params: &QuantParams,
    x: &QuantizedMatrix,
    config: &GemmConfig,
) -> Result<CorrectedResult, Error> {
    config.validate()?;
    if config.accumulator_mode == AccumulatorMode::I32 {
        return Err(Error::InvalidModeForBits { bits: config.bits, mode: "i32 (prepacked)" });
    }
    if lhs.kernel_height() != config.kernel_height {
        return Err(Error::InvalidKernelHeight(config.kernel_height));
    }
    check_operands(w_params, (lhs.rows(), lhs.depth()), x, config)?;
    packed_product(lhs, w_params, x, config)
}

/// 8-bit product with i32 accumulation and the same corrections.
pub fn qgemm_u8(w: &QuantizedMatrix, x: &QuantizedMatrix) -> Result<CorrectedResult, Error> {
    qgemm(w, x, &GemmConfig::u8_i32())
}

fn check_operands(
    w_params: &QuantParams,
    w_shape: (usize, usize),
    x: &QuantizedMatrix,
    config: &GemmConfig,
) -> Result<(), Error> {
    if w_params.bits != config.bits {
        return Err(Error::BitsMismatch { left: w_params.bits, right: config.bits });
    }
    if x.params().bits != config.bits {
        return Err(Error::BitsMismatch { left: w_params.bits, right: x.params().bits });
    }
    if w_shape.1 != x.rows() {
        return Err(Error::DimensionMismatch {
            left: w_shape,
            right: (x.rows(), x.cols()),
        });
    }
    Ok(())
}

/// Packed 16-bit-lane path: kernel tiles over full panels, scalar loops for
/// the leftover rows and columns, then the correction pass.
fn packed_product(
    lhs: &PackedLhs,
    w_params: &QuantParams,
    x: &QuantizedMatrix,
    config: &GemmConfig,
) -> Result<CorrectedResult, Error> {
    let m = lhs.rows();
    let depth = lhs.depth();
    let n = x.cols();
    config.guard_depth(depth)?;

    let rhs = pack_rhs(x);
    let padded_depth = rhs.padded_depth();
    let kh = lhs.kernel_height();
    let mut first = vec![0u16; m * n];

    let full_row_panels = m / kh;
    let row_tail = m % kh;
    // Rows handled by kernel tiles; within a 24-row tail, whole octets still
    // go through the 8-row kernel with the panel's 48-byte step.
    let tail_octets = if kh == BIG_KERNEL_HEIGHT { row_tail / 8 } else { 0 };
    let kernel_rows = full_row_panels * kh + tail_octets * 8;
    let col_panels = n / TILE_WIDTH;
    let kernel_cols = col_panels * TILE_WIDTH;

    for cp in 0..col_panels {
        let rhs_panel = rhs.panel(cp);
        for rp in 0..full_row_panels {
            let mut tile = AccumulatorTile::new(kh)?;
            kernel::microkernel(&mut tile, lhs.panel(rp), rhs_panel, padded_depth);
            scatter_tile(&tile, kh, rp * kh, cp * TILE_WIDTH, &mut first, n);
        }
        for octet in 0..tail_octets {
            let mut tile = AccumulatorTile::new(SMALL_KERNEL_HEIGHT)?;
            let panel = lhs.panel(full_row_panels);
            kernel::microkernel_strided(&mut tile, &panel[octet * 16..], 48, rhs_panel, padded_depth);
            scatter_tile(
                &tile,
                SMALL_KERNEL_HEIGHT,
                full_row_panels * kh + octet * 8,
                cp * TILE_WIDTH,
                &mut first,
                n,
            );
        }
    }

    // Leftover rows under all kernel columns.
    for row in kernel_rows..m {
        for col in 0..kernel_cols {
            first[row * n + col] = dot_u16(lhs, x, row, col, depth);
        }
    }
    // Leftover columns under all rows.
    for row in 0..m {
        for col in kernel_cols..n {
            first[row * n + col] = dot_u16(lhs, x, row, col, depth);
        }
    }

    Ok(correct(
        &first.iter().map(|&v| v as i32).collect::<Vec<i32>>(),
        m,
        n,
        depth,
        w_params,
        lhs.row_depth_sums(),
        x.params(),
        rhs.col_depth_sums(),
    ))
}

fn dot_u16(lhs: &PackedLhs, x: &QuantizedMatrix, row: usize, col: usize, depth: usize) -> u16 {
    let mut acc = 0u16;
    for k in 0..depth {
        acc = acc.wrapping_add(lhs.get(row, k) as u16 * x.get(k, col) as u16);
    }
    acc
}

fn scatter_tile(
    tile: &AccumulatorTile,
    height: usize,
    row0: usize,
    col0: usize,
    first: &mut [u16],
    n: usize,
) {
    for col in 0..TILE_WIDTH {
        for row in 0..height {
            first[(row0 + row) * n + col0 + col] = tile.get(row, col);
        }
    }
}

/// 8-bit path: i32 first term over the raw row-major operands.
fn qgemm_wide(
    w: &QuantizedMatrix,
    x: &QuantizedMatrix,
    config: &GemmConfig,
) -> Result<CorrectedResult, Error> {
    let m = w.rows();
    let depth = w.cols();
    let n = x.cols();
    config.guard_depth(depth)?;

    let mut first = vec![0i32; m * n];
    for i in 0..m {
        let out_row = &mut first[i * n..(i + 1) * n];
        for k in 0..depth {
            let a = w.get(i, k) as i32;
            let x_row = &x.data()[k * n..(k + 1) * n];
            for (o, &b) in out_row.iter_mut().zip(x_row) {
                *o = o.wrapping_add(a.wrapping_mul(b as i32));
            }
        }
    }

    let row_sums: Vec<i32> =
        (0..m).map(|i| (0..depth).map(|k| w.get(i, k) as i32).sum()).collect();
    let col_sums: Vec<i32> =
        (0..n).map(|j| (0..depth).map(|k| x.get(k, j) as i32).sum()).collect();

    Ok(correct(&first, m, n, depth, w.params(), &row_sums, x.params(), &col_sums))
}

#[allow(clippy::too_many_arguments)]
fn correct(
    first: &[i32],
    m: usize,
    n: usize,
    depth: usize,
    w_params: &QuantParams,
    row_sums: &[i32],
    x_params: &QuantParams,
    col_sums: &[i32],
) -> CorrectedResult {
    let z_w = w_params.zero_point as i32;
    let z_x = x_params.zero_point as i32;
    let constant = depth as i32 * z_w * z_x;
    let mut values = vec![0i32; m * n];
    for i in 0..m {
        let row_term = constant - z_x * row_sums[i];
        for j in 0..n {
            values[i * n + j] = first[i * n + j] - z_w * col_sums[j] + row_term;
        }
    }
    CorrectedResult { rows: m, cols: n, values, result_scale: w_params.scale * x_params.scale }
}
