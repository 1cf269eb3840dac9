//! Atmospheric scattering model and the dark-channel-prior baseline.

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::plane::{ColorSpace, PlanarImage, Plane};

/// Default lower bound on the transmission used when dehazing.
pub const DEFAULT_T0: f64 = 0.1;
/// Default dark-channel window.
pub const DEFAULT_PATCH: usize = 15;
/// Fraction of the brightest dark-channel pixels averaged for airlight.
pub const AIRLIGHT_FRACTION: f64 = 0.001;
/// Airlight components at or below this are treated as degenerate.
pub const MIN_AIRLIGHT: f64 = 0.05;

/// Clear image, depth map and scattering parameters of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct HazeScene {
    clear: PlanarImage,
    depth: Plane,
    beta: f64,
    airlight: [f64; 3],
}

impl HazeScene {
    pub fn new(clear: PlanarImage, depth: Plane, beta: f64, airlight: [f64; 3]) -> Result<Self> {
        if clear.colorspace() != ColorSpace::Rgb {
            return Err(Error::InvalidParameter("clear image must be RGB".into()));
        }
        if depth.dim() != clear.dim() {
            return Err(Error::ShapeMismatch(format!(
                "depth map is {:?} but the clear image is {:?}",
                depth.dim(),
                clear.dim()
            )));
        }
        check_beta_depth(&depth, beta)?;
        if airlight.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidParameter(format!(
                "airlight components must lie in [0, 1], got {airlight:?}"
            )));
        }
        Ok(Self {
            clear,
            depth,
            beta,
            airlight,
        })
    }

    pub fn clear(&self) -> &PlanarImage {
        &self.clear
    }

    pub fn depth(&self) -> &Plane {
        &self.depth
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn airlight(&self) -> [f64; 3] {
        self.airlight
    }

    pub fn transmission(&self) -> Plane {
        self.depth.mapv(|d| (-self.beta * d).exp())
    }
}

fn check_beta_depth(depth: &Plane, beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "scattering coefficient must be positive, got {beta}"
        )));
    }
    if depth.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
        return Err(Error::InvalidParameter(
            "depth must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

/// `t = exp(-beta * depth)`.
pub fn transmission_from_depth(depth: &Plane, beta: f64) -> Result<Plane> {
    check_beta_depth(depth, beta)?;
    Ok(depth.mapv(|d| (-beta * d).exp()))
}

/// Hazy image `I = R t + A (1 - t)`.
pub fn synthesize_haze(scene: &HazeScene) -> PlanarImage {
    apply_haze(&scene.clear, &scene.transmission(), scene.airlight)
}

/// Applies the scattering model for an explicit transmission map.
pub fn apply_haze(clear: &PlanarImage, transmission: &Plane, airlight: [f64; 3]) -> PlanarImage {
    let channels = clear
        .channels()
        .iter()
        .zip(airlight)
        .map(|(r, a)| {
            Zip::from(r)
                .and(transmission)
                .map_collect(|&r, &t| r * t + a * (1.0 - t))
        })
        .collect();
    PlanarImage::new(channels, ColorSpace::Rgb)
        .expect("shapes checked by caller")
        .clamped()
}

/// Shape of a generated depth map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthPattern {
    /// Depth grows linearly from the bottom row (0) to the top row (1).
    VerticalRamp,
    /// Depth grows with distance from the image centre, 1 at the corners.
    Radial,
    /// Smooth random field from a few low-frequency cosines, in `[0, 1]`.
    Smooth { seed: u64 },
}

/// Generates a depth map in `[0, depth_max]`.
pub fn synthetic_depth(height: usize, width: usize, pattern: DepthPattern, depth_max: f64) -> Plane {
    let (hf, wf) = ((height.max(2) - 1) as f64, (width.max(2) - 1) as f64);
    let unit: Plane = match pattern {
        DepthPattern::VerticalRamp => {
            Array2::from_shape_fn((height, width), |(r, _)| 1.0 - r as f64 / hf)
        }
        DepthPattern::Radial => {
            let (cy, cx) = (hf / 2.0, wf / 2.0);
            let max = (cy * cy + cx * cx).sqrt().max(f64::EPSILON);
            Array2::from_shape_fn((height, width), |(r, c)| {
                let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                (dy * dy + dx * dx).sqrt() / max
            })
        }
        DepthPattern::Smooth { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let waves: Vec<(f64, f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.gen_range(0.0..2.0),
                        rng.gen_range(0.0..2.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                        rng.gen_range(0.5..1.0),
                    )
                })
                .collect();
            let raw = Array2::from_shape_fn((height, width), |(r, c)| {
                let (v, u) = (r as f64 / hf, c as f64 / wf);
                waves
                    .iter()
                    .map(|&(fy, fx, ph, amp)| amp * (std::f64::consts::PI * (fy * v + fx * u) + ph).cos())
                    .sum::<f64>()
            });
            let lo = raw.fold(f64::INFINITY, |a, &b| a.min(b));
            let hi = raw.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let span = (hi - lo).max(f64::EPSILON);
            raw.mapv(|v| (v - lo) / span)
        }
    };
    unit.mapv(|v| v * depth_max)
}

fn min_filter_1d(values: &[f64], radius: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(n);
            values[lo..hi].iter().copied().fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Per-pixel minimum over the colour channels, then over a square window
/// (clipped at the image border).
pub fn dark_channel(image: &PlanarImage, patch_size: usize) -> Result<Plane> {
    if patch_size % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "patch size must be odd, got {patch_size}"
        )));
    }
    let radius = patch_size / 2;
    let (h, w) = image.dim();
    let mut min_rgb = image.channel(0).clone();
    for ch in &image.channels()[1..] {
        Zip::from(&mut min_rgb).and(ch).for_each(|m, &v| *m = m.min(v));
    }
    let mut rows = Array2::zeros((h, w));
    for r in 0..h {
        let row: Vec<f64> = min_rgb.row(r).to_vec();
        for (c, v) in min_filter_1d(&row, radius).into_iter().enumerate() {
            rows[[r, c]] = v;
        }
    }
    let mut out = Array2::zeros((h, w));
    for c in 0..w {
        let col: Vec<f64> = rows.column(c).to_vec();
        for (r, v) in min_filter_1d(&col, radius).into_iter().enumerate() {
            out[[r, c]] = v;
        }
    }
    Ok(out)
}

/// Mean colour of the top 0.1% dark-channel pixels (at least one). Ties
/// are broken by row-major scan order.
pub fn estimate_airlight(image: &PlanarImage, dark: &Plane) -> Result<[f64; 3]> {
    if dark.dim() != image.dim() || image.num_channels() != 3 {
        return Err(Error::ShapeMismatch(
            "dark channel must match a three-channel image".into(),
        ));
    }
    let total = dark.len();
    let count = ((total as f64 * AIRLIGHT_FRACTION).floor() as usize).max(1);
    let flat: Vec<f64> = dark.iter().copied().collect();
    let mut idx: Vec<usize> = (0..total).collect();
    // Stable sort keeps scan order among equal values.
    idx.sort_by(|&a, &b| flat[b].total_cmp(&flat[a]));
    let w = image.width();
    let mut acc = [0.0; 3];
    for &i in &idx[..count] {
        let (r, c) = (i / w, i % w);
        for (ch, a) in acc.iter_mut().enumerate() {
            *a += image.channel(ch)[[r, c]];
        }
    }
    Ok(acc.map(|a| a / count as f64))
}

/// Everything the DCP baseline estimates along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct DcpResult {
    pub dehazed: PlanarImage,
    pub transmission: Plane,
    pub airlight: [f64; 3],
}

/// Dark-channel-prior dehazing: `R = (I - A) / max(t, t0) + A`, clamped.
pub fn dcp_dehaze(image: &PlanarImage, t0: f64, patch_size: usize) -> Result<PlanarImage> {
    dcp_dehaze_detailed(image, t0, patch_size).map(|r| r.dehazed)
}

pub fn dcp_dehaze_detailed(image: &PlanarImage, t0: f64, patch_size: usize) -> Result<DcpResult> {
    if !(t0 > 0.0 && t0 < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "transmission floor t0 must lie in (0, 1), got {t0}"
        )));
    }
    if image.colorspace() != ColorSpace::Rgb {
        return Err(Error::InvalidParameter("DCP expects an RGB image".into()));
    }
    let dark = dark_channel(image, patch_size)?;
    let airlight = estimate_airlight(image, &dark)?;
    if airlight.iter().any(|&a| a <= MIN_AIRLIGHT) {
        return Err(Error::InvalidParameter(format!(
            "degenerate airlight estimate {airlight:?}"
        )));
    }
    let normalized = PlanarImage::new(
        image
            .channels()
            .iter()
            .zip(airlight)
            .map(|(c, a)| c.mapv(|v| v / a))
            .collect(),
        ColorSpace::Rgb,
    )?;
    let transmission = dark_channel(&normalized, patch_size)?.mapv(|d| 1.0 - d);
    let channels = image
        .channels()
        .iter()
        .zip(airlight)
        .map(|(c, a)| {
            Zip::from(c)
                .and(&transmission)
                .map_collect(|&i, &t| (i - a) / t.max(t0) + a)
        })
        .collect();
    let dehazed = PlanarImage::new(channels, ColorSpace::Rgb)?.clamped();
    Ok(DcpResult {
        dehazed,
        transmission,
        airlight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;

    fn random_rgb(h: usize, w: usize, seed: u64, lo: f64, hi: f64) -> PlanarImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut plane = || Array2::from_shape_fn((h, w), |_| rng.gen_range(lo..hi));
        PlanarImage::rgb(plane(), plane(), plane()).unwrap()
    }

    #[test]
    fn transmission_basics() {
        let depth = Array2::from_shape_fn((3, 4), |(r, c)| (r + c) as f64 * 0.3);
        let t = transmission_from_depth(&depth, 1.0).unwrap();
        assert_eq!(t[[0, 0]], 1.0);
        let t = transmission_from_depth(&Array2::from_elem((1, 1), 2f64.ln()), 1.0).unwrap();
        assert!((t[[0, 0]] - 0.5).abs() < 1e-15);

        let t1 = transmission_from_depth(&depth, 0.7).unwrap();
        let t2 = transmission_from_depth(&depth, 1.4).unwrap();
        for (a, b) in t1.iter().zip(t2.iter()) {
            assert!((a * a - b).abs() < 1e-15);
        }
        assert!(transmission_from_depth(&depth, 0.0).is_err());
        assert!(transmission_from_depth(&depth.mapv(|d| -d - 1.0), 1.0).is_err());
    }

    #[test]
    fn haze_limits_and_hand_value() {
        let clear = random_rgb(4, 5, 1, 0.0, 1.0);
        let none = HazeScene::new(clear.clone(), Array2::zeros((4, 5)), 1.0, [0.8; 3]).unwrap();
        assert_eq!(synthesize_haze(&none), clear);

        let opaque = apply_haze(&clear, &Array2::zeros((4, 5)), [0.7, 0.8, 0.9]);
        for (c, a) in [0.7, 0.8, 0.9].iter().enumerate() {
            assert!(opaque.channel(c).iter().all(|v| v == a));
        }

        let px = PlanarImage::filled(1, 1, &[0.2, 0.4, 0.6], ColorSpace::Rgb).unwrap();
        let scene = HazeScene::new(px, Array2::from_elem((1, 1), 2f64.ln()), 1.0, [1.0; 3]).unwrap();
        let hazy = synthesize_haze(&scene);
        // t = 0.5: 0.5 r + 0.5
        assert!((hazy.channel(0)[[0, 0]] - 0.6).abs() < 1e-15);
        assert!((hazy.channel(2)[[0, 0]] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn scene_validation() {
        let clear = random_rgb(4, 5, 1, 0.0, 1.0);
        assert!(HazeScene::new(clear.clone(), Array2::zeros((5, 4)), 1.0, [0.8; 3]).is_err());
        assert!(HazeScene::new(clear.clone(), Array2::zeros((4, 5)), -1.0, [0.8; 3]).is_err());
        assert!(HazeScene::new(clear, Array2::zeros((4, 5)), 1.0, [1.2, 0.5, 0.5]).is_err());
    }

    #[test]
    fn hazy_pixels_lie_between_clear_and_airlight() {
        let clear = random_rgb(16, 16, 3, 0.0, 1.0);
        let depth = synthetic_depth(16, 16, DepthPattern::Smooth { seed: 4 }, 2.0);
        let a = [0.9, 0.85, 0.8];
        let hazy: Vec<PlanarImage> = [0.2, 0.5, 1.0, 2.0]
            .iter()
            .map(|&beta| synthesize_haze(&HazeScene::new(clear.clone(), depth.clone(), beta, a).unwrap()))
            .collect();
        for c in 0..3 {
            for (idx, &r) in clear.channel(c).iter().enumerate() {
                let (lo, hi) = (r.min(a[c]), r.max(a[c]));
                let offsets: Vec<f64> = hazy
                    .iter()
                    .map(|h| h.channel(c).iter().nth(idx).copied().unwrap())
                    .inspect(|&i| assert!(i >= lo - 1e-12 && i <= hi + 1e-12))
                    .map(|i| (i - r).abs())
                    .collect();
                assert!(offsets.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            }
        }
    }

    #[test]
    fn depth_patterns_are_in_range() {
        for pattern in [
            DepthPattern::VerticalRamp,
            DepthPattern::Radial,
            DepthPattern::Smooth { seed: 9 },
        ] {
            let d = synthetic_depth(12, 20, pattern, 3.0);
            assert!(d.iter().all(|&v| (0.0..=3.0 + 1e-12).contains(&v)));
        }
        let ramp = synthetic_depth(5, 2, DepthPattern::VerticalRamp, 1.0);
        assert_eq!(ramp[[4, 0]], 0.0);
        assert_eq!(ramp[[0, 1]], 1.0);
    }

    fn brute_dark(image: &PlanarImage, patch: usize) -> Plane {
        let (h, w) = image.dim();
        let r = patch as isize / 2;
        Array2::from_shape_fn((h, w), |(y, x)| {
            let mut m = f64::INFINITY;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                    if (0..h as isize).contains(&yy) && (0..w as isize).contains(&xx) {
                        for c in 0..3 {
                            m = m.min(image.channel(c)[[yy as usize, xx as usize]]);
                        }
                    }
                }
            }
            m
        })
    }

    #[test]
    fn dark_channel_matches_brute_force() {
        let img = random_rgb(13, 17, 5, 0.0, 1.0);
        for patch in [1, 3, 7, 15] {
            assert_eq!(dark_channel(&img, patch).unwrap(), brute_dark(&img, patch));
        }
        assert!(dark_channel(&img, 4).is_err());

        let constant = PlanarImage::filled(6, 6, &[0.3; 3], ColorSpace::Rgb).unwrap();
        assert!(dark_channel(&constant, 3).unwrap().iter().all(|&v| v == 0.3));

        let mut chans = img.clone().into_channels();
        chans[1][[6, 8]] = 0.0;
        let img = PlanarImage::new(chans, ColorSpace::Rgb).unwrap();
        let dark = dark_channel(&img, 3).unwrap();
        for y in 5..=7 {
            for x in 7..=9 {
                assert_eq!(dark[[y, x]], 0.0);
            }
        }
    }

    #[test]
    fn airlight_constant_and_ties() {
        let img = PlanarImage::filled(8, 8, &[0.7, 0.8, 0.9], ColorSpace::Rgb).unwrap();
        let dark = dark_channel(&img, 3).unwrap();
        assert_eq!(estimate_airlight(&img, &dark).unwrap(), [0.7, 0.8, 0.9]);

        // 100 pixels: a single candidate; the two maxima tie and the first
        // in scan order wins.
        let mut chans = random_rgb(10, 10, 6, 0.0, 0.5).into_channels();
        for (c, v) in [0.1, 0.2, 0.3].iter().enumerate() {
            chans[c][[2, 3]] = *v;
        }
        for (c, v) in [0.4, 0.5, 0.6].iter().enumerate() {
            chans[c][[7, 1]] = *v;
        }
        let img = PlanarImage::new(chans, ColorSpace::Rgb).unwrap();
        let mut dark = Array2::zeros((10, 10));
        dark[[2, 3]] = 1.0;
        dark[[7, 1]] = 1.0;
        assert_eq!(estimate_airlight(&img, &dark).unwrap(), [0.1, 0.2, 0.3]);
    }

    fn scene_with_sky(seed: u64) -> (PlanarImage, Plane, [f64; 3]) {
        let (h, w) = (64, 64);
        let clear = crate::scenes::textured_scene(h, w, seed);
        let mut depth = synthetic_depth(h, w, DepthPattern::VerticalRamp, 1.5);
        for r in 0..12 {
            for c in 0..w {
                depth[[r, c]] = 12.0;
            }
        }
        (clear, depth, [0.85, 0.8, 0.75])
    }

    #[test]
    fn airlight_recovered_from_opaque_region() {
        let (clear, depth, a) = scene_with_sky(1);
        let hazy = synthesize_haze(&HazeScene::new(clear, depth, 1.0, a).unwrap());
        let dark = dark_channel(&hazy, DEFAULT_PATCH).unwrap();
        let est = estimate_airlight(&hazy, &dark).unwrap();
        for c in 0..3 {
            assert!((est[c] - a[c]).abs() < 0.02, "{est:?} vs {a:?}");
        }
    }

    #[test]
    fn dcp_improves_synthetic_scene_and_rehazes() {
        for seed in 0..4 {
            let (clear, depth, a) = scene_with_sky(seed);
            let hazy = synthesize_haze(&HazeScene::new(clear.clone(), depth, 1.0, a).unwrap());
            let res = dcp_dehaze_detailed(&hazy, DEFAULT_T0, DEFAULT_PATCH).unwrap();
            let before = psnr(&hazy, &clear, 1.0).unwrap();
            let after = psnr(&res.dehazed, &clear, 1.0).unwrap();
            assert!(after > before, "seed {seed}: {after} <= {before}");

            let t = res.transmission.mapv(|t| t.max(DEFAULT_T0));
            let rehazed = apply_haze(&res.dehazed, &t, res.airlight);
            let mut mae = 0.0;
            for c in 0..3 {
                mae += (rehazed.channel(c) - hazy.channel(c)).mapv(f64::abs).mean().unwrap();
            }
            assert!(mae / 3.0 < 0.05);
        }
    }

    #[test]
    fn dcp_on_haze_free_image_is_nearly_identity() {
        // Haze-free scene with a zero channel in every window and a bright
        // region standing in for the sky.
        let img = crate::scenes::textured_scene(48, 48, 7);
        let mut chans = img.into_channels();
        for r in 0..48 {
            for c in 0..48 {
                if (r / 4 + c / 4) % 2 == 0 {
                    chans[2][[r, c]] = 0.0;
                }
            }
        }
        for ch in chans.iter_mut() {
            ch[[0, 0]] = 0.95;
        }
        let img = PlanarImage::new(chans, ColorSpace::Rgb).unwrap();
        assert!(dark_channel(&img, DEFAULT_PATCH).unwrap().iter().all(|&d| d == 0.0));
        let out = dcp_dehaze(&img, DEFAULT_T0, DEFAULT_PATCH).unwrap();
        let mut mae = 0.0;
        for c in 0..3 {
            mae += (out.channel(c) - img.channel(c)).mapv(f64::abs).mean().unwrap();
        }
        assert!(mae / 3.0 < 0.05);
    }

    #[test]
    fn dcp_floor_and_errors() {
        // Uniform airlight-coloured image: t = 0 everywhere, pinned at t0.
        let img = PlanarImage::filled(8, 8, &[0.9, 0.9, 0.9], ColorSpace::Rgb).unwrap();
        let res = dcp_dehaze_detailed(&img, DEFAULT_T0, 3).unwrap();
        assert!(res.transmission.iter().all(|&t| t.abs() < 1e-12));
        assert!(res.dehazed.channels().iter().all(|c| c.iter().all(|v| v.is_finite())));

        let dark_img = PlanarImage::filled(8, 8, &[0.01, 0.5, 0.5], ColorSpace::Rgb).unwrap();
        assert!(dcp_dehaze(&dark_img, DEFAULT_T0, 3).is_err());
        assert!(dcp_dehaze(&img, 0.0, 3).is_err());
        assert!(dcp_dehaze(&img, 1.0, 3).is_err());
        assert!(dcp_dehaze(&img, 0.1, 4).is_err());
    }
}
