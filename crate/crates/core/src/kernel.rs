//! Register-tile micro-kernels over packed panels.
//!
//! A tile is `height x 4` with `height` 8 or 24, held as 16-bit unsigned
//! accumulator lanes. One inner step consumes two depth levels: per 8-row
//! octet the packed left panel supplies 16 bytes (the octet at depth `k`,
//! then at `k+1`), and the packed right panel supplies one byte pair per
//! tile column. Every product is an 8-bit by 8-bit widening multiply added
//! into a 16-bit lane.
//!
//! Lanes wrap modulo 2^16 by construction — on SIMD paths because the
//! hardware adds wrap, on the scalar path explicitly. Keeping the reduction
//! depth inside the documented safe bound is the caller's job; the driver in
//! [`crate::qgemm`] refuses risky depths unless asked not to.

use crate::error::Error;

/// Tile width shared by both kernels.
pub const TILE_WIDTH: usize = 4;

/// Height of the small tile.
pub const SMALL_KERNEL_HEIGHT: usize = 8;

/// Height of the large tile.
pub const BIG_KERNEL_HEIGHT: usize = 24;

const MAX_LANES: usize = BIG_KERNEL_HEIGHT * TILE_WIDTH;

/// A `height x 4` block of 16-bit accumulators.
///
/// Lanes are stored column-major (`column * height + row`) so each tile
/// column is a run of whole 8-lane vectors.
#[derive(Debug, Clone)]
pub struct AccumulatorTile {
    height: usize,
    lanes: [u16; MAX_LANES],
}

impl AccumulatorTile {
    pub fn new(height: usize) -> Result<AccumulatorTile, Error> {
        if height != SMALL_KERNEL_HEIGHT && height != BIG_KERNEL_HEIGHT {
            return Err(Error::InvalidKernelHeight(height));
        }
        Ok(AccumulatorTile { height, lanes: [0; MAX_LANES] })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        debug_assert!(row < self.height && col < TILE_WIDTH);
        self.lanes[col * self.height + row]
    }

    /// The live lanes, column-major.
    pub fn lanes(&self) -> &[u16] {
        &self.lanes[..self.height * TILE_WIDTH]
    }
}

/// Accumulate a packed panel product into `tile`.
///
/// `lhs_panel` and `rhs_panel` are contiguous panels from [`crate::pack`],
/// `depth` their shared (padded, even) depth. Panics if `depth` is odd or a
/// panel is too short; numeric overflow is the caller's contract, see the
/// module docs.
pub fn microkernel(tile: &mut AccumulatorTile, lhs_panel: &[u8], rhs_panel: &[u8], depth: usize) {
    let step = 16 * (tile.height / 8);
    microkernel_strided(tile, lhs_panel, step, rhs_panel, depth);
}

/// Same as [`microkernel`] on the portable scalar path, for differential
/// testing of the SIMD implementations.
pub fn microkernel_scalar(
    tile: &mut AccumulatorTile,
    lhs_panel: &[u8],
    rhs_panel: &[u8],
    depth: usize,
) {
    let octets = tile.height / 8;
    check_panels(lhs_panel, 16 * octets, octets, rhs_panel, depth);
    kernel_scalar(&mut tile.lanes, lhs_panel, 16 * octets, octets, rhs_panel, depth);
}

/// Kernel entry that lets the left panel advance by a foreign stride.
///
/// Used by the product driver to run the 8-row kernel over one octet of a
/// 24-row panel: the octet's 16-byte groups sit 48 bytes apart.
pub(crate) fn microkernel_strided(
    tile: &mut AccumulatorTile,
    lhs: &[u8],
    lhs_step: usize,
    rhs_panel: &[u8],
    depth: usize,
) {
    let octets = tile.height / 8;
    check_panels(lhs, lhs_step, octets, rhs_panel, depth);
    #[cfg(target_arch = "x86_64")]
    {
        // SSE2 is part of the x86_64 baseline; no runtime detection needed.
        unsafe {
            kernel_sse2(tile.lanes.as_mut_ptr(), lhs.as_ptr(), lhs_step, octets, rhs_panel.as_ptr(), depth);
        }
        return;
    }
    #[cfg(target_arch = "aarch64")]
    {
        unsafe {
            kernel_neon(tile.lanes.as_mut_ptr(), lhs.as_ptr(), lhs_step, octets, rhs_panel.as_ptr(), depth);
        }
        return;
    }
    #[allow(unreachable_code)]
    kernel_scalar(&mut tile.lanes, lhs, lhs_step, octets, rhs_panel, depth);
}

fn check_panels(lhs: &[u8], lhs_step: usize, octets: usize, rhs: &[u8], depth: usize) {
    assert!(depth % 2 == 0, "kernel depth must be even (got {depth})");
    let steps = depth / 2;
    if steps > 0 {
        let lhs_needed = (steps - 1) * lhs_step + 16 * octets;
        assert!(lhs.len() >= lhs_needed, "left panel too short: {} < {}", lhs.len(), lhs_needed);
        assert!(rhs.len() >= steps * 8, "right panel too short: {} < {}", rhs.len(), steps * 8);
    }
}

fn kernel_scalar(
    lanes: &mut [u16; MAX_LANES],
    lhs: &[u8],
    lhs_step: usize,
    octets: usize,
    rhs: &[u8],
    depth: usize,
) {
    let height = octets * 8;
    for step in 0..depth / 2 {
        let lhs_base = step * lhs_step;
        let rhs_base = step * 8;
        for col in 0..TILE_WIDTH {
            let b0 = rhs[rhs_base + col * 2] as u16;
            let b1 = rhs[rhs_base + col * 2 + 1] as u16;
            for octet in 0..octets {
                let group = lhs_base + octet * 16;
                for r in 0..8 {
                    let a0 = lhs[group + r] as u16;
                    let a1 = lhs[group + 8 + r] as u16;
                    let lane = &mut lanes[col * height + octet * 8 + r];
                    *lane = lane.wrapping_add(a0 * b0).wrapping_add(a1 * b1);
                }
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
unsafe fn kernel_sse2(
    lanes: *mut u16,
    lhs: *const u8,
    lhs_step: usize,
    octets: usize,
    rhs: *const u8,
    depth: usize,
) {
    use std::arch::x86_64::*;

    debug_assert!(octets == 1 || octets == 3);
    let height = octets * 8;
    let zero = _mm_setzero_si128();

    // res[col][octet]: one vector of 8 row lanes.
    let mut res = [[zero; 3]; TILE_WIDTH];
    for col in 0..TILE_WIDTH {
        for octet in 0..octets {
            res[col][octet] = _mm_loadu_si128(lanes.add(col * height + octet * 8) as *const __m128i);
        }
    }

    let mut lhs_ptr = lhs;
    let mut rhs_ptr = rhs;
    for _ in 0..depth / 2 {
        let mut even = [zero; 3];
        let mut odd = [zero; 3];
        for octet in 0..octets {
            let group = _mm_loadu_si128(lhs_ptr.add(octet * 16) as *const __m128i);
            even[octet] = _mm_unpacklo_epi8(group, zero);
            odd[octet] = _mm_unpackhi_epi8(group, zero);
        }
        for col in 0..TILE_WIDTH {
            let b0 = _mm_set1_epi16(*rhs_ptr.add(col * 2) as i16);
            let b1 = _mm_set1_epi16(*rhs_ptr.add(col * 2 + 1) as i16);
            for octet in 0..octets {
                res[col][octet] = _mm_add_epi16(res[col][octet], _mm_mullo_epi16(even[octet], b0));
                res[col][octet] = _mm_add_epi16(res[col][octet], _mm_mullo_epi16(odd[octet], b1));
            }
        }
        lhs_ptr = lhs_ptr.add(lhs_step);
        rhs_ptr = rhs_ptr.add(8);
    }

    for col in 0..TILE_WIDTH {
        for octet in 0..octets {
            _mm_storeu_si128(lanes.add(col * height + octet * 8) as *mut __m128i, res[col][octet]);
        }
    }
}

#[cfg(target_arch = "aarch64")]
unsafe fn kernel_neon(
    lanes: *mut u16,
    lhs: *const u8,
    lhs_step: usize,
    octets: usize,
    rhs: *const u8,
    depth: usize,
) {
    use std::arch::aarch64::*;

    debug_assert!(octets == 1 || octets == 3);
    let height = octets * 8;

    let mut res = [[vdupq_n_u16(0); 3]; TILE_WIDTH];
    for col in 0..TILE_WIDTH {
        for octet in 0..octets {
            res[col][octet] = vld1q_u16(lanes.add(col * height + octet * 8));
        }
    }

    let mut lhs_ptr = lhs;
    let mut rhs_ptr = rhs;
    for _ in 0..depth / 2 {
        let mut even = [vdup_n_u8(0); 3];
        let mut odd = [vdup_n_u8(0); 3];
        for octet in 0..octets {
            let group = vld1q_u8(lhs_ptr.add(octet * 16));
            even[octet] = vget_low_u8(group);
            odd[octet] = vget_high_u8(group);
        }
        for col in 0..TILE_WIDTH {
            let b0 = vdup_n_u8(*rhs_ptr.add(col * 2));
            let b1 = vdup_n_u8(*rhs_ptr.add(col * 2 + 1));
            for octet in 0..octets {
                res[col][octet] = vmlal_u8(res[col][octet], even[octet], b0);
                res[col][octet] = vmlal_u8(res[col][octet], odd[octet], b1);
            }
        }
        lhs_ptr = lhs_ptr.add(lhs_step);
        rhs_ptr = rhs_ptr.add(8);
    }

    for col in 0..TILE_WIDTH {
        for octet in 0..octets {
            vst1q_u16(lanes.add(col * height + octet * 8), res[col][octet]);
        }
    }
}
