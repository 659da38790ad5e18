//! Integer codes of grid cells: boustrophedon (snake) codes, Morton and Hilbert indices.

use super::{AxisPerm, CodeMode};
use crate::{Error, Result};

/// Largest grid accepted for snake codes; `grid_n^3` must fit in a `u64`.
pub const MAX_CTS_GRID: u64 = 1 << 20;
/// Bits per axis available to Morton/Hilbert indices in a `u64`.
pub const MAX_CURVE_BITS: u32 = 21;

/// Two-coordinate row code.
///
/// Even rows run left to right (`n2 * width + n1`). Odd rows run right to
/// left; [`CodeMode::PaperLiteral`] uses `(n2 + 1) * width - n1`, which
/// collides with the first cell of the next row, while [`CodeMode::Bijective`]
/// subtracts one more so every row occupies exactly `[n2 * width, (n2 + 1) * width)`.
pub fn code_func(n1: u64, n2: u64, width: u64, mode: CodeMode) -> Result<u64> {
    if n1 >= width {
        return Err(Error::InvalidArgument(format!(
            "n1 = {n1} is outside [0, {width})"
        )));
    }
    Ok(row_code(n1, n2, width, mode))
}

#[inline]
fn row_code(n1: u64, n2: u64, width: u64, mode: CodeMode) -> u64 {
    if n2.is_multiple_of(2) {
        n2 * width + n1
    } else {
        match mode {
            CodeMode::PaperLiteral => (n2 + 1) * width - n1,
            CodeMode::Bijective => (n2 + 1) * width - 1 - n1,
        }
    }
}

/// Snake code of a cell: `code_func(code_func(p1, p2, n), p3, n^2)` where
/// `p = (cell[perm[0]], cell[perm[1]], cell[perm[2]])`.
///
/// In [`CodeMode::PaperLiteral`] the inner code can reach `n^2` itself (last cell of an
/// odd row at `n1 = 0`), so the outer range check admits that single extra value.
pub fn cts_code(cell: [u32; 3], grid_n: u64, perm: AxisPerm, mode: CodeMode) -> Result<u64> {
    check_cts_grid(grid_n)?;
    if let Some(&c) = cell.iter().find(|&&c| u64::from(c) >= grid_n) {
        return Err(Error::InvalidArgument(format!(
            "cell index {c} is outside [0, {grid_n})"
        )));
    }
    Ok(cts_code_unchecked(cell, grid_n, perm, mode))
}

#[inline]
pub(crate) fn cts_code_unchecked(cell: [u32; 3], grid_n: u64, perm: AxisPerm, mode: CodeMode) -> u64 {
    let p = perm.apply(cell);
    let inner = row_code(u64::from(p[0]), u64::from(p[1]), grid_n, mode);
    row_code(inner, u64::from(p[2]), grid_n * grid_n, mode)
}

pub(crate) fn check_cts_grid(grid_n: u64) -> Result<()> {
    if grid_n == 0 || grid_n > MAX_CTS_GRID {
        return Err(Error::InvalidArgument(format!(
            "snake codes need 1 <= grid_n <= {MAX_CTS_GRID}, got {grid_n}"
        )));
    }
    Ok(())
}

/// Bits per axis for a curve over `grid_n` cells; non-powers of two round up.
pub fn curve_bits(grid_n: u64) -> Result<u32> {
    if grid_n == 0 {
        return Err(Error::InvalidArgument("grid_n must be positive".into()));
    }
    let bits = grid_n.next_power_of_two().trailing_zeros().max(1);
    if bits > MAX_CURVE_BITS {
        return Err(Error::InvalidArgument(format!(
            "grid_n = {grid_n} needs {bits} bits per axis; at most {MAX_CURVE_BITS} fit"
        )));
    }
    Ok(bits)
}

#[inline]
fn spread_bits(v: u32) -> u64 {
    let mut x = u64::from(v) & 0x1f_ffff;
    x = (x | (x << 32)) & 0x001f_0000_0000_ffff;
    x = (x | (x << 16)) & 0x001f_0000_ff00_00ff;
    x = (x | (x << 8)) & 0x100f_00f0_0f00_f00f;
    x = (x | (x << 4)) & 0x10c3_0c30_c30c_30c3;
    x = (x | (x << 2)) & 0x1249_2492_4924_9249;
    x
}

/// Morton (z-order) code: x in bit 0, y in bit 1, z in bit 2 of each triple.
pub fn morton_code(cell: [u32; 3], grid_n: u64) -> Result<u64> {
    let bits = curve_bits(grid_n)?;
    check_cell(cell, bits)?;
    Ok(morton_unchecked(cell))
}

#[inline]
pub(crate) fn morton_unchecked(cell: [u32; 3]) -> u64 {
    spread_bits(cell[0]) | (spread_bits(cell[1]) << 1) | (spread_bits(cell[2]) << 2)
}

fn check_cell(cell: [u32; 3], bits: u32) -> Result<()> {
    if let Some(&c) = cell.iter().find(|&&c| u64::from(c) >> bits != 0) {
        return Err(Error::InvalidArgument(format!(
            "cell index {c} does not fit in {bits} bits"
        )));
    }
    Ok(())
}

/// 3-D Hilbert index (Skilling's transpose algorithm).
///
/// Consecutive indices are face-adjacent cells, and the top three bits of the
/// index at `bits` equal the index of the parent cell at `bits - 1`.
pub fn hilbert_code(cell: [u32; 3], grid_n: u64) -> Result<u64> {
    let bits = curve_bits(grid_n)?;
    check_cell(cell, bits)?;
    Ok(hilbert_unchecked(cell, bits))
}

pub(crate) fn hilbert_unchecked(cell: [u32; 3], bits: u32) -> u64 {
    let mut x = cell;
    let top = 1u32 << (bits - 1);

    // Inverse undo excess work.
    let mut q = top;
    while q > 1 {
        let p = q - 1;
        for i in 0..3 {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }

    // Gray encode.
    for i in 1..3 {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    let mut q = top;
    while q > 1 {
        if x[2] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for v in &mut x {
        *v ^= t;
    }

    let mut index = 0u64;
    for b in (0..bits).rev() {
        for v in x {
            index = (index << 1) | u64::from((v >> b) & 1);
        }
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    const XYZ: AxisPerm = AxisPerm::XYZ;

    fn all_cells(n: u32) -> impl Iterator<Item = [u32; 3]> {
        (0..n).flat_map(move |z| (0..n).flat_map(move |y| (0..n).map(move |x| [x, y, z])))
    }

    fn l1(a: [u32; 3], b: [u32; 3]) -> u32 {
        (0..3).map(|k| a[k].abs_diff(b[k])).sum()
    }

    #[test]
    fn code_func_examples() {
        for mode in [CodeMode::PaperLiteral, CodeMode::Bijective] {
            assert_eq!(code_func(0, 0, 4, mode).unwrap(), 0);
        }
        assert_eq!(code_func(3, 1, 4, CodeMode::PaperLiteral).unwrap(), 5);
        assert_eq!(code_func(3, 1, 4, CodeMode::Bijective).unwrap(), 4);
        // Literal odd-row formula lands on the first cell of the next row.
        assert_eq!(code_func(0, 1, 4, CodeMode::PaperLiteral).unwrap(), 8);
        assert_eq!(code_func(0, 2, 4, CodeMode::PaperLiteral).unwrap(), 8);
        assert!(matches!(
            code_func(4, 0, 4, CodeMode::Bijective),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn cts_zero_cell() {
        for perm in AxisPerm::ALL {
            for mode in [CodeMode::PaperLiteral, CodeMode::Bijective] {
                assert_eq!(cts_code([0; 3], 8, perm, mode).unwrap(), 0);
            }
        }
    }

    #[test]
    fn cts_grid2_enumerates_0_to_7() {
        let mut codes: Vec<u64> = all_cells(2)
            .map(|c| cts_code(c, 2, XYZ, CodeMode::Bijective).unwrap())
            .collect();
        codes.sort_unstable();
        assert_eq!(codes, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn cts_grid4_snake_steps() {
        let mut by_code: Vec<(u64, [u32; 3])> = all_cells(4)
            .map(|c| (cts_code(c, 4, XYZ, CodeMode::Bijective).unwrap(), c))
            .collect();
        by_code.sort_unstable();
        for w in by_code.windows(2) {
            assert_eq!(w[1].0, w[0].0 + 1);
            assert_eq!(l1(w[0].1, w[1].1), 1, "{:?} -> {:?}", w[0].1, w[1].1);
        }
    }

    #[test]
    fn cts_rejects_out_of_range() {
        assert!(cts_code([4, 0, 0], 4, XYZ, CodeMode::Bijective).is_err());
        assert!(cts_code([0, 0, 0], 0, XYZ, CodeMode::Bijective).is_err());
        assert!(cts_code([0, 0, 0], MAX_CTS_GRID + 1, XYZ, CodeMode::Bijective).is_err());
        assert!(cts_code([0, 0, 0], MAX_CTS_GRID, XYZ, CodeMode::Bijective).is_ok());
    }

    #[test]
    fn morton_examples() {
        assert_eq!(morton_code([0; 3], 2).unwrap(), 0);
        assert_eq!(morton_code([1, 1, 1], 2).unwrap(), 7);
        assert_eq!(morton_code([1, 0, 0], 2).unwrap(), 1);
        assert_eq!(morton_code([0, 0, 1], 2).unwrap(), 4);
        let max = (1u32 << 21) - 1;
        assert_eq!(morton_code([max; 3], 1 << 21).unwrap(), (1u64 << 63) - 1);
        assert!(morton_code([2, 0, 0], 2).is_err());
        assert!(morton_code([0; 3], 1 << 22).is_err());
    }

    #[test]
    fn curve_bits_round_up() {
        assert_eq!(curve_bits(1).unwrap(), 1);
        assert_eq!(curve_bits(2).unwrap(), 1);
        assert_eq!(curve_bits(5).unwrap(), 3);
        assert_eq!(curve_bits(64).unwrap(), 6);
        assert!(curve_bits(0).is_err());
    }

    #[test]
    fn hilbert_grid4_is_bijective_and_continuous() {
        let mut by_code: Vec<(u64, [u32; 3])> = all_cells(4)
            .map(|c| (hilbert_code(c, 4).unwrap(), c))
            .collect();
        by_code.sort_unstable();
        assert_eq!(
            by_code.iter().map(|e| e.0).collect::<Vec<_>>(),
            (0..64).collect::<Vec<_>>()
        );
        assert_eq!(by_code[0].1, [0, 0, 0]);
        for w in by_code.windows(2) {
            assert_eq!(l1(w[0].1, w[1].1), 1);
        }
    }

    #[test]
    fn hilbert_and_morton_nest_across_levels() {
        for c in all_cells(8) {
            let parent = c.map(|v| v / 2);
            assert_eq!(hilbert_code(c, 8).unwrap() >> 3, hilbert_code(parent, 4).unwrap());
            assert_eq!(morton_code(c, 8).unwrap() >> 3, morton_code(parent, 4).unwrap());
        }
    }
}
