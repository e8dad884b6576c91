//! Operand packing into micro-kernel consumption order.
//!
//! The kernels walk the reduction dimension two levels at a time, so both
//! packed layouts group bytes by depth pairs:
//!
//! * Right-hand side: 4-column panels. Within a panel the bytes for one
//!   depth pair are `[x(k,c0), x(k+1,c0), x(k,c1), x(k+1,c1), ...]` for the
//!   four panel columns — 8 bytes per kernel step.
//! * Left-hand side: panels of `kernel_height` rows (8 or 24). Each panel is
//!   organised per depth pair as one 16-byte group per 8-row octet: the octet
//!   at depth `k` followed by the same octet at depth `k+1`. With a single
//!   octet this degenerates to whole 8-row columns stored depth by depth.
//!
//! Depth is zero-padded to a multiple of 2 and rows/columns to whole panels.
//! Padding bytes are zero, so they add nothing to the raw product term. The
//! per-row and per-column depth sums needed by the zero-point corrections are
//! accumulated over the original entries only and ride along with the buffer.

use crate::error::Error;
use crate::quant::QuantizedMatrix;

/// Columns covered by one right-hand panel (also the kernel tile width).
pub const PANEL_COLS: usize = 4;

fn round_up(n: usize, multiple: usize) -> usize {
    n.div_ceil(multiple) * multiple
}

/// Right-hand matrix reordered into 4-column panels.
#[derive(Debug, Clone)]
pub struct PackedRhs {
    buffer: Vec<u8>,
    depth: usize,
    cols: usize,
    cols_packed: usize,
    col_depth_sums: Vec<i32>,
}

impl PackedRhs {
    pub fn buffer(&self) -> &[u8] {
        &self.buffer
    }

    /// Original (unpadded) reduction depth.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Depth rounded up to the pair granularity of the kernel step.
    pub fn padded_depth(&self) -> usize {
        round_up(self.depth, 2)
    }

    /// Original column count.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Column count rounded up to whole panels.
    pub fn cols_packed(&self) -> usize {
        self.cols_packed
    }

    /// Sum of the original entries of each column, for zero-point corrections.
    pub fn col_depth_sums(&self) -> &[i32] {
        &self.col_depth_sums
    }

    /// The bytes of one 4-column panel.
    pub fn panel(&self, index: usize) -> &[u8] {
        let stride = self.padded_depth() * PANEL_COLS;
        &self.buffer[index * stride..(index + 1) * stride]
    }

    /// Read back one original entry from the packed layout.
    pub fn get(&self, k: usize, col: usize) -> u8 {
        debug_assert!(k < self.depth && col < self.cols);
        let panel_base = (col / PANEL_COLS) * self.padded_depth() * PANEL_COLS;
        self.buffer[panel_base + (k / 2) * 8 + (col % PANEL_COLS) * 2 + (k % 2)]
    }
}

/// Pack the right-hand operand of a product (`depth x cols`).
pub fn pack_rhs(x: &QuantizedMatrix) -> PackedRhs {
    let depth = x.rows();
    let cols = x.cols();
    let padded_depth = round_up(depth, 2);
    let cols_packed = round_up(cols, PANEL_COLS);
    let mut buffer = vec![0u8; padded_depth * cols_packed];
    let mut col_depth_sums = vec![0i32; cols];
    for col in 0..cols {
        let panel_base = (col / PANEL_COLS) * padded_depth * PANEL_COLS;
        let lane = (col % PANEL_COLS) * 2;
        let mut sum = 0i32;
        for k in 0..depth {
            let v = x.get(k, col);
            sum += v as i32;
            buffer[panel_base + (k / 2) * 8 + lane + (k % 2)] = v;
        }
        col_depth_sums[col] = sum;
    }
    PackedRhs { buffer, depth, cols, cols_packed, col_depth_sums }
}

/// Left-hand matrix reordered into `kernel_height`-row panels.
#[derive(Debug, Clone)]
pub struct PackedLhs {
    buffer: Vec<u8>,
    kernel_height: usize,
    rows: usize,
    rows_packed: usize,
    depth: usize,
    row_depth_sums: Vec<i32>,
}

impl PackedLhs {
    pub fn buffer(&self) -> &[u8] {
        &self.buffer
    }

    /// Panel height the buffer was packed for (8 or 24).
    pub fn kernel_height(&self) -> usize {
        self.kernel_height
    }

    /// Original row count.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Row count rounded up to whole panels.
    pub fn rows_packed(&self) -> usize {
        self.rows_packed
    }

    /// Original (unpadded) reduction depth.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn padded_depth(&self) -> usize {
        round_up(self.depth, 2)
    }

    /// Sum of the original entries of each row, for zero-point corrections.
    pub fn row_depth_sums(&self) -> &[i32] {
        &self.row_depth_sums
    }

    /// The bytes of one panel of `kernel_height` rows.
    pub fn panel(&self, index: usize) -> &[u8] {
        let stride = self.kernel_height * self.padded_depth();
        &self.buffer[index * stride..(index + 1) * stride]
    }

    /// Read back one original entry from the packed layout.
    pub fn get(&self, row: usize, k: usize) -> u8 {
        debug_assert!(row < self.rows && k < self.depth);
        self.buffer[self.offset(row, k)]
    }

    fn offset(&self, row: usize, k: usize) -> usize {
        let octets = self.kernel_height / 8;
        let panel_base = (row / self.kernel_height) * self.kernel_height * self.padded_depth();
        let r = row % self.kernel_height;
        panel_base + (k / 2) * (16 * octets) + (r / 8) * 16 + (k % 2) * 8 + (r % 8)
    }
}

/// Pack the left-hand operand of a product (`rows x depth`) for panels of
/// `kernel_height` rows. Only heights 8 and 24 are supported.
pub fn pack_lhs(w: &QuantizedMatrix, kernel_height: usize) -> Result<PackedLhs, Error> {
    if kernel_height != 8 && kernel_height != 24 {
        return Err(Error::InvalidKernelHeight(kernel_height));
    }
    let rows = w.rows();
    let depth = w.cols();
    let padded_depth = round_up(depth, 2);
    let rows_packed = round_up(rows, kernel_height);
    let mut packed = PackedLhs {
        buffer: vec![0u8; rows_packed * padded_depth],
        kernel_height,
        rows,
        rows_packed,
        depth,
        row_depth_sums: vec![0i32; rows],
    };
    for row in 0..rows {
        let mut sum = 0i32;
        for k in 0..depth {
            let v = w.get(row, k);
            sum += v as i32;
            let at = packed.offset(row, k);
            packed.buffer[at] = v;
        }
        packed.row_depth_sums[row] = sum;
    }
    Ok(packed)
}

/// Reconstruct the original row-major `depth x cols` bytes from a packed
/// right-hand buffer (padding dropped).
pub fn unpack_rhs(p: &PackedRhs) -> Vec<u8> {
    let mut out = vec![0u8; p.depth() * p.cols()];
    for k in 0..p.depth() {
        for col in 0..p.cols() {
            out[k * p.cols() + col] = p.get(k, col);
        }
    }
    out
}

/// Reconstruct the original row-major `rows x depth` bytes from a packed
/// left-hand buffer (padding dropped).
pub fn unpack_lhs(p: &PackedLhs) -> Vec<u8> {
    let mut out = vec![0u8; p.rows() * p.depth()];
    for row in 0..p.rows() {
        for k in 0..p.depth() {
            out[row * p.depth() + k] = p.get(row, k);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::QuantParams;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn matrix(rows: usize, cols: usize, data: Vec<u8>) -> QuantizedMatrix {
        let params = QuantParams::new(1.0, 0, 8).unwrap();
        QuantizedMatrix::from_parts(rows, cols, data, params).unwrap()
    }

    fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> QuantizedMatrix {
        let data = (0..rows * cols).map(|_| rng.random_range(0..16)).collect();
        matrix(rows, cols, data)
    }

    #[test]
    fn rhs_single_panel_order() {
        // 4x4, values numbered row-major; one panel, depth pairs interleave
        // the two levels of each column.
        let x = matrix(4, 4, (0..16).collect());
        let p = pack_rhs(&x);
        assert_eq!(
            p.buffer(),
            &[0, 4, 1, 5, 2, 6, 3, 7, 8, 12, 9, 13, 10, 14, 11, 15]
        );
        assert_eq!(p.cols_packed(), 4);
        assert_eq!(p.padded_depth(), 4);
    }

    #[test]
    fn rhs_pads_odd_depth_and_narrow_cols() {
        // One column, odd depth: zeros fill the missing pair level and the
        // three missing panel columns.
        let x = matrix(1, 1, vec![9]);
        let p = pack_rhs(&x);
        assert_eq!(p.buffer(), &[9, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(p.cols_packed(), 4);
        assert_eq!(p.padded_depth(), 2);
        assert_eq!(p.col_depth_sums(), &[9]);
    }

    #[test]
    fn rhs_col_sums_ignore_padding() {
        let x = matrix(3, 5, vec![
            1, 2, 3, 4, 5, //
            6, 7, 8, 9, 10, //
            11, 12, 13, 14, 15,
        ]);
        let p = pack_rhs(&x);
        assert_eq!(p.col_depth_sums(), &[18, 21, 24, 27, 30]);
        assert_eq!(p.cols_packed(), 8);
        assert_eq!(p.buffer().len(), 4 * 8);
    }

    #[test]
    fn lhs_height8_stores_whole_columns() {
        // 8 rows, depth 2: all eight rows of depth column 0, then column 1.
        let mut data = Vec::new();
        for r in 0..8u8 {
            data.extend_from_slice(&[r, r + 8]);
        }
        let w = matrix(8, 2, data);
        let p = pack_lhs(&w, 8).unwrap();
        assert_eq!(
            p.buffer(),
            &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15]
        );
    }

    #[test]
    fn lhs_height24_interleaves_octets_per_depth_pair() {
        // 24 rows, depth 2, value = row for depth 0 and row+24 for depth 1.
        // Expected order: rows 0-7 at depth 0, rows 0-7 at depth 1,
        // rows 8-15 at depth 0, rows 8-15 at depth 1, rows 16-23 at both.
        let mut data = Vec::new();
        for r in 0..24u8 {
            data.extend_from_slice(&[r, r + 24]);
        }
        let w = matrix(24, 2, data);
        let p = pack_lhs(&w, 24).unwrap();
        let mut expected = Vec::new();
        for octet in 0..3u8 {
            for level in 0..2u8 {
                for r in 0..8u8 {
                    expected.push(octet * 8 + r + level * 24);
                }
            }
        }
        assert_eq!(p.buffer(), &expected[..]);
    }

    #[test]
    fn lhs_pads_rows_to_full_panels() {
        let w = matrix(9, 2, vec![1; 18]);
        let p = pack_lhs(&w, 8).unwrap();
        assert_eq!(p.rows_packed(), 16);
        assert_eq!(p.buffer().len(), 16 * 2);
        let q = pack_lhs(&w, 24).unwrap();
        assert_eq!(q.rows_packed(), 24);
        assert_eq!(q.buffer().len(), 24 * 2);
        // Bytes past the original rows are padding zeros.
        let nonzero: usize = q.buffer().iter().map(|&b| b as usize).sum();
        assert_eq!(nonzero, 18);
    }

    #[test]
    fn lhs_rejects_other_heights() {
        let w = matrix(4, 4, vec![0; 16]);
        assert!(matches!(pack_lhs(&w, 16), Err(Error::InvalidKernelHeight(16))));
        assert!(matches!(pack_lhs(&w, 0), Err(Error::InvalidKernelHeight(0))));
    }

    #[test]
    fn round_trip_over_shape_sweep() {
        let mut rng = StdRng::seed_from_u64(5);
        let row_cases = [1, 7, 8, 9, 15, 16, 23, 24, 25, 47, 48, 50];
        let depth_cases = [1, 2, 3, 4, 5, 8, 9, 17];
        let col_cases = [1, 2, 3, 4, 5, 7, 8, 9, 12];
        for &rows in &row_cases {
            for &depth in &depth_cases {
                let w = random_matrix(&mut rng, rows, depth);
                for kernel_height in [8, 24] {
                    let p = pack_lhs(&w, kernel_height).unwrap();
                    assert_eq!(unpack_lhs(&p), w.data(), "rows {rows} depth {depth} kh {kernel_height}");
                    let sums: Vec<i32> = (0..rows)
                        .map(|r| (0..depth).map(|k| w.get(r, k) as i32).sum())
                        .collect();
                    assert_eq!(p.row_depth_sums(), &sums[..]);
                }
            }
        }
        for &depth in &depth_cases {
            for &cols in &col_cases {
                let x = random_matrix(&mut rng, depth, cols);
                let p = pack_rhs(&x);
                assert_eq!(unpack_rhs(&p), x.data(), "depth {depth} cols {cols}");
                let sums: Vec<i32> = (0..cols)
                    .map(|c| (0..depth).map(|k| x.get(k, c) as i32).sum())
                    .collect();
                assert_eq!(p.col_depth_sums(), &sums[..]);
            }
        }
    }

    #[test]
    fn zero_matrix_packs_to_zero_buffer() {
        let w = matrix(10, 3, vec![0; 30]);
        let p = pack_lhs(&w, 8).unwrap();
        assert!(p.buffer().iter().all(|&b| b == 0));
        assert_eq!(p.row_depth_sums(), &[0; 10]);
        let x = matrix(3, 10, vec![0; 30]);
        let r = pack_rhs(&x);
        assert!(r.buffer().iter().all(|&b| b == 0));
    }
}
