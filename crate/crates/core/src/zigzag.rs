//! JPEG zig-zag traversal of the 8x8 index grid.

/// `(row, column)` pairs in JPEG zig-zag scan order.
pub const ZIGZAG_8X8: [(usize, usize); 64] = build_zigzag();

const fn build_zigzag() -> [(usize, usize); 64] {
    let mut out = [(0usize, 0usize); 64];
    let mut k = 0;
    let mut s = 0;
    while s < 15 {
        let lo = if s > 7 { s - 7 } else { 0 };
        let hi = if s < 7 { s } else { 7 };
        if s % 2 == 0 {
            // Even diagonals run bottom-left to top-right.
            let mut r = hi + 1;
            while r > lo {
                r -= 1;
                out[k] = (r, s - r);
                k += 1;
            }
        } else {
            let mut r = lo;
            while r <= hi {
                out[k] = (r, s - r);
                k += 1;
                r += 1;
            }
        }
        s += 1;
    }
    out
}

/// Zig-zag position of the `(row, column)` pair.
pub fn zigzag_index(row: usize, col: usize) -> usize {
    ZIGZAG_8X8
        .iter()
        .position(|&rc| rc == (row, col))
        .expect("row and column must be below 8")
}

#[cfg(test)]
mod tests {
    use super::*;

    // The scan table as printed in the JPEG standard (ITU T.81 figure A.6),
    // giving the zig-zag index at each raster position.
    const RASTER_TO_ZIGZAG: [usize; 64] = [
        0, 1, 5, 6, 14, 15, 27, 28, //
        2, 4, 7, 13, 16, 26, 29, 42, //
        3, 8, 12, 17, 25, 30, 41, 43, //
        9, 11, 18, 24, 31, 40, 44, 53, //
        10, 19, 23, 32, 39, 45, 52, 54, //
        20, 22, 33, 38, 46, 51, 55, 60, //
        21, 34, 37, 47, 50, 56, 59, 61, //
        35, 36, 48, 49, 57, 58, 62, 63,
    ];

    #[test]
    fn matches_jpeg_table() {
        for row in 0..8 {
            for col in 0..8 {
                assert_eq!(zigzag_index(row, col), RASTER_TO_ZIGZAG[row * 8 + col]);
            }
        }
    }

    #[test]
    fn is_a_permutation() {
        let mut seen = [false; 64];
        for &(r, c) in ZIGZAG_8X8.iter() {
            assert!(!seen[r * 8 + c]);
            seen[r * 8 + c] = true;
        }
    }
}
