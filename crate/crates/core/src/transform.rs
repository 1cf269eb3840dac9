//! Forward and inverse Krawtchouk moment transforms.
//!
//! The matrix form works on a single `N x N` block. The convolution form
//! turns a whole channel into a [`FrequencyCube`] of 64 coefficient maps,
//! either per non-overlapping 8x8 block or as a stride-1 correlation.
//!
//! Row/column convention: for `Q = M2 · G · M1ᵀ`, `M2` acts on the rows
//! (vertical coordinate) of `G` and `M1` on its columns.

use std::fmt::Write as _;

use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::krawtchouk::{BasisSet, PolynomialMatrix, BANDS, BLOCK};
use crate::plane::{reflect_pad, Plane};
use crate::zigzag::ZIGZAG_8X8;

/// Padding before the anchor of an 8-tap `same` correlation; the other
/// side receives `BLOCK - 1 - SAME_BEFORE`.
pub const SAME_BEFORE: usize = (BLOCK - 1) / 2;

fn check_square(what: &str, m: &Array2<f64>, size: usize) -> Result<()> {
    if m.dim() != (size, size) {
        return Err(Error::ShapeMismatch(format!(
            "{what} is {:?}, expected {size}x{size}",
            m.dim()
        )));
    }
    Ok(())
}

fn check_pair(m1: &PolynomialMatrix, m2: &PolynomialMatrix) -> Result<usize> {
    if m1.size() != m2.size() {
        return Err(Error::ShapeMismatch(format!(
            "polynomial matrices differ in size: {} vs {}",
            m1.size(),
            m2.size()
        )));
    }
    Ok(m1.size())
}

/// Moments `Q = M2 · G · M1ᵀ` of a square block.
pub fn forward_moments(
    block: &Array2<f64>,
    m1: &PolynomialMatrix,
    m2: &PolynomialMatrix,
) -> Result<Array2<f64>> {
    let size = check_pair(m1, m2)?;
    check_square("block", block, size)?;
    Ok(m2.entries().dot(block).dot(&m1.entries().t()))
}

/// Reconstruction `G = M2ᵀ · Q · M1`.
pub fn inverse_moments(
    moments: &Array2<f64>,
    m1: &PolynomialMatrix,
    m2: &PolynomialMatrix,
) -> Result<Array2<f64>> {
    let size = check_pair(m1, m2)?;
    check_square("moment matrix", moments, size)?;
    Ok(m2.entries().t().dot(moments).dot(m1.entries()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubeMode {
    /// Non-overlapping 8x8 blocks; map `k` holds one coefficient per block.
    Block,
    /// Stride-1 zero-padded `same` correlation; maps match the channel size.
    Sliding,
}

impl CubeMode {
    pub fn name(self) -> &'static str {
        match self {
            CubeMode::Block => "block",
            CubeMode::Sliding => "sliding",
        }
    }
}

/// Stack of 64 coefficient maps of one channel, in zig-zag band order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyCube {
    maps: Vec<Plane>,
    mode: CubeMode,
    original: (usize, usize),
}

impl FrequencyCube {
    pub fn new(maps: Vec<Plane>, mode: CubeMode, original: (usize, usize)) -> Result<Self> {
        if maps.len() != BANDS {
            return Err(Error::ShapeMismatch(format!(
                "frequency cube needs {BANDS} maps, got {}",
                maps.len()
            )));
        }
        let dim = maps[0].dim();
        if maps.iter().any(|m| m.dim() != dim) {
            return Err(Error::ShapeMismatch("cube maps differ in shape".into()));
        }
        Ok(Self {
            maps,
            mode,
            original,
        })
    }

    pub fn maps(&self) -> &[Plane] {
        &self.maps
    }

    pub fn maps_mut(&mut self) -> &mut [Plane] {
        &mut self.maps
    }

    pub fn map(&self, band: usize) -> &Plane {
        &self.maps[band]
    }

    pub fn mode(&self) -> CubeMode {
        self.mode
    }

    /// Size of the channel the cube was computed from.
    pub fn original_size(&self) -> (usize, usize) {
        self.original
    }

    pub fn map_dim(&self) -> (usize, usize) {
        self.maps[0].dim()
    }

    /// `(i, j)` polynomial orders of each band.
    pub fn order(&self) -> &'static [(usize, usize); BANDS] {
        &ZIGZAG_8X8
    }
}

/// Rounds `len` up to the next multiple of the block size.
pub fn padded_len(len: usize) -> usize {
    len.div_ceil(BLOCK) * BLOCK
}

/// Applies the fixed 64-filter layer to one channel.
pub fn kcl_apply(channel: &Plane, basis: &BasisSet, mode: CubeMode) -> Result<FrequencyCube> {
    let (h, w) = channel.dim();
    if h == 0 || w == 0 {
        return Err(Error::ShapeMismatch("channel is empty".into()));
    }
    let poly = PolynomialMatrix::new(*basis.params());
    let maps = match mode {
        CubeMode::Block => block_maps(channel, &poly),
        CubeMode::Sliding => sliding_maps(channel, &poly),
    };
    FrequencyCube::new(maps, mode, (h, w))
}

fn block_maps(channel: &Plane, poly: &PolynomialMatrix) -> Vec<Plane> {
    let (h, w) = channel.dim();
    let (ph, pw) = (padded_len(h), padded_len(w));
    let padded = if (ph, pw) == (h, w) {
        channel.clone()
    } else {
        reflect_pad(channel, 0, ph - h, 0, pw - w)
    };
    let (bh, bw) = (ph / BLOCK, pw / BLOCK);
    let mut maps = vec![Array2::zeros((bh, bw)); BANDS];
    let m = poly.entries();
    for by in 0..bh {
        for bx in 0..bw {
            let block = padded.slice(s![by * BLOCK..(by + 1) * BLOCK, bx * BLOCK..(bx + 1) * BLOCK]);
            let q = m.dot(&block).dot(&m.t());
            for (k, &(i, j)) in ZIGZAG_8X8.iter().enumerate() {
                maps[k][[by, bx]] = q[[i, j]];
            }
        }
    }
    maps
}

/// Separable `same` correlation: each filter is the outer product of
/// polynomial rows `i` (vertical) and `j` (horizontal).
fn sliding_maps(channel: &Plane, poly: &PolynomialMatrix) -> Vec<Plane> {
    let (h, w) = channel.dim();
    let m = poly.entries();
    let off = SAME_BEFORE as isize;
    let horizontal: Vec<Plane> = (0..BLOCK)
        .map(|j| {
            Array2::from_shape_fn((h, w), |(y, x)| {
                (0..BLOCK)
                    .filter_map(|b| {
                        let xx = x as isize + b as isize - off;
                        (0..w as isize)
                            .contains(&xx)
                            .then(|| m[[j, b]] * channel[[y, xx as usize]])
                    })
                    .sum()
            })
        })
        .collect();
    ZIGZAG_8X8
        .iter()
        .map(|&(i, j)| {
            let src = &horizontal[j];
            Array2::from_shape_fn((h, w), |(y, x)| {
                (0..BLOCK)
                    .filter_map(|a| {
                        let yy = y as isize + a as isize - off;
                        (0..h as isize)
                            .contains(&yy)
                            .then(|| m[[i, a]] * src[[yy as usize, x]])
                    })
                    .sum()
            })
        })
        .collect()
}

/// Exact inverse of the block-mode layer, cropped to the original size.
pub fn ikcl_exact(cube: &FrequencyCube, basis: &BasisSet) -> Result<Plane> {
    if cube.mode != CubeMode::Block {
        return Err(Error::ModeMismatch {
            expected: CubeMode::Block.name(),
            found: cube.mode.name(),
        });
    }
    let poly = PolynomialMatrix::new(*basis.params());
    let m = poly.entries();
    let (bh, bw) = cube.map_dim();
    let mut out = Array2::zeros((bh * BLOCK, bw * BLOCK));
    let mut q = Array2::zeros((BLOCK, BLOCK));
    for by in 0..bh {
        for bx in 0..bw {
            for (k, &(i, j)) in ZIGZAG_8X8.iter().enumerate() {
                q[[i, j]] = cube.maps[k][[by, bx]];
            }
            let g = m.t().dot(&q).dot(m);
            out.slice_mut(s![by * BLOCK..(by + 1) * BLOCK, bx * BLOCK..(bx + 1) * BLOCK])
                .assign(&g);
        }
    }
    let (h, w) = cube.original;
    if h > out.nrows() || w > out.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "cube of {bh}x{bw} blocks cannot hold a {h}x{w} channel"
        )));
    }
    Ok(out.slice(s![..h, ..w]).to_owned())
}

/// Low bands `0..t` and high bands `t..64` of a cube.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCube {
    pub low: Vec<Plane>,
    pub high: Vec<Plane>,
    mode: CubeMode,
    original: (usize, usize),
}

impl SplitCube {
    pub fn threshold(&self) -> usize {
        self.low.len()
    }
}

/// Partitions the cube at split point `t` (`1..=63`).
pub fn split_cube(cube: &FrequencyCube, t: usize) -> Result<SplitCube> {
    check_threshold(t)?;
    Ok(SplitCube {
        low: cube.maps[..t].to_vec(),
        high: cube.maps[t..].to_vec(),
        mode: cube.mode,
        original: cube.original,
    })
}

pub fn merge_cube(split: SplitCube) -> Result<FrequencyCube> {
    let mut maps = split.low;
    maps.extend(split.high);
    FrequencyCube::new(maps, split.mode, split.original)
}

pub fn check_threshold(t: usize) -> Result<()> {
    if !(1..BANDS).contains(&t) {
        return Err(Error::OutOfRange {
            what: "split point T",
            value: t,
            max: BANDS - 1,
        });
    }
    Ok(())
}

/// Per-band coefficient statistics of a hazy/clear pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandStat {
    pub band: usize,
    pub i: usize,
    pub j: usize,
    pub mean_abs_hazy: f64,
    pub mean_abs_clear: f64,
    /// Mean of `clear - hazy`.
    pub mean_diff: f64,
    /// Mean of `|clear - hazy|`; not part of the CSV table.
    pub mean_abs_diff: f64,
}

pub fn band_energy_stats(hazy: &FrequencyCube, clear: &FrequencyCube) -> Result<Vec<BandStat>> {
    if hazy.mode != clear.mode {
        return Err(Error::ModeMismatch {
            expected: hazy.mode.name(),
            found: clear.mode.name(),
        });
    }
    if hazy.map_dim() != clear.map_dim() {
        return Err(Error::ShapeMismatch(format!(
            "hazy cube maps are {:?}, clear cube maps are {:?}",
            hazy.map_dim(),
            clear.map_dim()
        )));
    }
    let count = (hazy.map_dim().0 * hazy.map_dim().1) as f64;
    Ok(ZIGZAG_8X8
        .iter()
        .enumerate()
        .map(|(band, &(i, j))| {
            let (hm, cm) = (&hazy.maps[band], &clear.maps[band]);
            let mut stat = BandStat {
                band,
                i,
                j,
                mean_abs_hazy: 0.0,
                mean_abs_clear: 0.0,
                mean_diff: 0.0,
                mean_abs_diff: 0.0,
            };
            for (&h, &c) in hm.iter().zip(cm.iter()) {
                stat.mean_abs_hazy += h.abs();
                stat.mean_abs_clear += c.abs();
                stat.mean_diff += c - h;
                stat.mean_abs_diff += (c - h).abs();
            }
            stat.mean_abs_hazy /= count;
            stat.mean_abs_clear /= count;
            stat.mean_diff /= count;
            stat.mean_abs_diff /= count;
            stat
        })
        .collect())
}

pub const BAND_STATS_HEADER: &str = "band,i,j,mean_abs_hazy,mean_abs_clear,mean_diff";

/// Renders the `band_stats.csv` table.
pub fn band_stats_csv(stats: &[BandStat]) -> String {
    let mut out = String::from(BAND_STATS_HEADER);
    out.push('\n');
    for st in stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            st.band, st.i, st.j, st.mean_abs_hazy, st.mean_abs_clear, st.mean_diff
        );
    }
    out
}

/// Worst-case errors of a block-mode forward/inverse pass over one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundtripReport {
    pub max_error: f64,
    /// Largest per-block gap between pixel energy and coefficient energy,
    /// taken over the padded channel.
    pub max_parseval_error: f64,
    pub blocks: usize,
}

pub fn roundtrip_report(channel: &Plane, basis: &BasisSet) -> Result<RoundtripReport> {
    let cube = kcl_apply(channel, basis, CubeMode::Block)?;
    let back = ikcl_exact(&cube, basis)?;
    let max_error = back
        .iter()
        .zip(channel.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let (h, w) = channel.dim();
    let padded = reflect_pad(channel, 0, padded_len(h) - h, 0, padded_len(w) - w);
    let (bh, bw) = cube.map_dim();
    let mut max_parseval_error = 0.0f64;
    for by in 0..bh {
        for bx in 0..bw {
            let pixels: f64 = padded
                .slice(s![by * BLOCK..(by + 1) * BLOCK, bx * BLOCK..(bx + 1) * BLOCK])
                .iter()
                .map(|v| v * v)
                .sum();
            let coeffs: f64 = cube.maps.iter().map(|m| m[[by, bx]].powi(2)).sum();
            max_parseval_error = max_parseval_error.max((pixels - coeffs).abs());
        }
    }
    Ok(RoundtripReport {
        max_error,
        max_parseval_error,
        blocks: bh * bw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krawtchouk::KrawtchoukParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis() -> BasisSet {
        BasisSet::with_p(0.5).unwrap()
    }

    fn poly8() -> PolynomialMatrix {
        PolynomialMatrix::new(KrawtchoukParams::symmetric(8).unwrap())
    }

    fn random_plane(h: usize, w: usize, seed: u64) -> Plane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.gen::<f64>())
    }

    fn tile(filter: &Array2<f64>, by: usize, bx: usize) -> Plane {
        Array2::from_shape_fn((by * 8, bx * 8), |(r, c)| filter[[r % 8, c % 8]])
    }

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn forward_matches_double_sum() {
        for &(p1, p2) in &[(0.5, 0.5), (0.3, 0.6)] {
            let m1 = PolynomialMatrix::new(KrawtchoukParams::new(p1, 8).unwrap());
            let m2 = PolynomialMatrix::new(KrawtchoukParams::new(p2, 8).unwrap());
            let g = random_plane(8, 8, 3);
            let q = forward_moments(&g, &m1, &m2).unwrap();
            for n in 0..8 {
                for mm in 0..8 {
                    let mut acc = 0.0;
                    for y in 0..8 {
                        for x in 0..8 {
                            acc += m2.entries()[[n, y]] * m1.entries()[[mm, x]] * g[[y, x]];
                        }
                    }
                    assert!((q[[n, mm]] - acc).abs() < 1e-10);
                }
            }
            let back = inverse_moments(&q, &m1, &m2).unwrap();
            assert!(max_abs_diff(&back, &g) < 1e-8);
        }
    }

    #[test]
    fn moments_of_special_blocks() {
        let m = poly8();
        let zero = Array2::zeros((8, 8));
        assert_eq!(forward_moments(&zero, &m, &m).unwrap(), zero);
        assert_eq!(inverse_moments(&zero, &m, &m).unwrap(), zero);

        let q = forward_moments(basis().filter(0), &m, &m).unwrap();
        for ((r, c), v) in q.indexed_iter() {
            let expected = if (r, c) == (0, 0) { 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-10);
        }

        let mut q = Array2::zeros((8, 8));
        q[[2, 5]] = 1.7;
        let g = inverse_moments(&q, &m, &m).unwrap();
        let k = crate::zigzag::zigzag_index(2, 5);
        let expected = basis().filter(k) * 1.7;
        assert!(max_abs_diff(&g, &expected) < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = poly8();
        let small = PolynomialMatrix::new(KrawtchoukParams::symmetric(4).unwrap());
        assert!(forward_moments(&Array2::zeros((4, 4)), &m, &m).is_err());
        assert!(forward_moments(&Array2::zeros((8, 8)), &m, &small).is_err());
        assert!(inverse_moments(&Array2::zeros((8, 7)), &m, &m).is_err());
    }

    #[test]
    fn kcl_zero_and_empty() {
        let b = basis();
        for mode in [CubeMode::Block, CubeMode::Sliding] {
            let cube = kcl_apply(&Array2::zeros((16, 24)), &b, mode).unwrap();
            assert!(cube.maps().iter().all(|m| m.iter().all(|&v| v == 0.0)));
            assert!(kcl_apply(&Array2::zeros((0, 8)), &b, mode).is_err());
        }
    }

    #[test]
    fn block_mode_isolates_tiled_filter() {
        let b = basis();
        let cube = kcl_apply(&tile(b.filter(5), 3, 4), &b, CubeMode::Block).unwrap();
        assert_eq!(cube.map_dim(), (3, 4));
        for (k, map) in cube.maps().iter().enumerate() {
            let expected = if k == 5 { 1.0 } else { 0.0 };
            assert!(map.iter().all(|v| (v - expected).abs() < 1e-8), "band {k}");
        }
        let back = ikcl_exact(&cube, &b).unwrap();
        assert!(max_abs_diff(&back, &tile(b.filter(5), 3, 4)) < 1e-8);
    }

    #[test]
    fn block_roundtrip_with_padding() {
        let b = basis();
        for &(h, w) in &[(64, 64), (13, 29), (8, 9), (1, 1)] {
            let ch = random_plane(h, w, (h * 100 + w) as u64);
            let cube = kcl_apply(&ch, &b, CubeMode::Block).unwrap();
            assert_eq!(cube.map_dim(), (padded_len(h) / 8, padded_len(w) / 8));
            assert_eq!(cube.original_size(), (h, w));
            let back = ikcl_exact(&cube, &b).unwrap();
            assert!(max_abs_diff(&back, &ch) < 1e-8);
        }
        let zero = FrequencyCube::new(vec![Array2::zeros((2, 2)); 64], CubeMode::Block, (16, 16)).unwrap();
        assert!(ikcl_exact(&zero, &b).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ikcl_rejects_sliding_cube() {
        let b = basis();
        let cube = kcl_apply(&random_plane(16, 16, 1), &b, CubeMode::Sliding).unwrap();
        assert!(matches!(ikcl_exact(&cube, &b), Err(Error::ModeMismatch { .. })));
    }

    #[test]
    fn sliding_matches_direct_correlation() {
        let b = basis();
        let ch = random_plane(12, 10, 9);
        let cube = kcl_apply(&ch, &b, CubeMode::Sliding).unwrap();
        for k in [0, 7, 33, 63] {
            let f = b.filter(k);
            for y in 0..12 {
                for x in 0..10 {
                    let mut acc = 0.0;
                    for a in 0..8 {
                        for c in 0..8 {
                            let yy = y as isize + a as isize - 3;
                            let xx = x as isize + c as isize - 3;
                            if (0..12).contains(&yy) && (0..10).contains(&xx) {
                                acc += f[[a, c]] * ch[[yy as usize, xx as usize]];
                            }
                        }
                    }
                    assert!((cube.map(k)[[y, x]] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sliding_agrees_with_block_on_interior_anchors() {
        let b = basis();
        let ch = random_plane(40, 48, 17);
        let sliding = kcl_apply(&ch, &b, CubeMode::Sliding).unwrap();
        let block = kcl_apply(&ch, &b, CubeMode::Block).unwrap();
        for k in 0..64 {
            for by in 0..5 {
                for bx in 0..6 {
                    let s = sliding.map(k)[[by * 8 + SAME_BEFORE, bx * 8 + SAME_BEFORE]];
                    assert!((s - block.map(k)[[by, bx]]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn split_and_merge() {
        let b = basis();
        let cube = kcl_apply(&random_plane(16, 16, 4), &b, CubeMode::Sliding).unwrap();
        let split = split_cube(&cube, 60).unwrap();
        assert_eq!((split.low.len(), split.high.len()), (60, 4));
        let split = split_cube(&cube, 1).unwrap();
        assert_eq!(split.low.len(), 1);
        assert_eq!(&split.low[0], cube.map(0));
        for t in 1..64 {
            assert_eq!(merge_cube(split_cube(&cube, t).unwrap()).unwrap(), cube);
        }
        assert!(split_cube(&cube, 0).is_err());
        assert!(split_cube(&cube, 64).is_err());
    }

    #[test]
    fn band_stats_locality_and_identity() {
        let b = basis();
        let cube = kcl_apply(&random_plane(32, 32, 5), &b, CubeMode::Block).unwrap();
        let same = band_energy_stats(&cube, &cube).unwrap();
        assert_eq!(same.len(), 64);
        assert!(same.iter().all(|s| s.mean_diff == 0.0));

        let mut perturbed = cube.clone();
        perturbed.maps_mut()[17].mapv_inplace(|v| v + 0.25);
        let stats = band_energy_stats(&cube, &perturbed).unwrap();
        for s in &stats {
            if s.band == 17 {
                assert!((s.mean_diff - 0.25).abs() < 1e-12);
            } else {
                assert_eq!(s.mean_diff, 0.0);
            }
        }

        let other = kcl_apply(&random_plane(16, 32, 5), &b, CubeMode::Block).unwrap();
        assert!(band_energy_stats(&cube, &other).is_err());
        let sliding = kcl_apply(&random_plane(32, 32, 5), &b, CubeMode::Sliding).unwrap();
        assert!(band_energy_stats(&cube, &sliding).is_err());
    }

    #[test]
    fn band_stats_csv_layout() {
        let b = basis();
        let cube = kcl_apply(&random_plane(8, 8, 5), &b, CubeMode::Block).unwrap();
        let csv = band_stats_csv(&band_energy_stats(&cube, &cube).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], BAND_STATS_HEADER);
        assert_eq!(lines.len(), 65);
        assert!(lines[4].starts_with("3,2,0,"));
    }

    #[test]
    fn roundtrip_report_on_ragged_channel() {
        let basis = BasisSet::with_p(0.5).unwrap();
        let channel = Array2::from_shape_fn((13, 21), |(r, c)| ((r * 7 + c * 3) % 11) as f64 / 10.0);
        let rep = roundtrip_report(&channel, &basis).unwrap();
        assert_eq!(rep.blocks, 2 * 3);
        assert!(rep.max_error < 1e-12);
        assert!(rep.max_parseval_error < 1e-12);
    }
}
