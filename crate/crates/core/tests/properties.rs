use krawtex::colorspace::{rgb_to_ycbcr, ycbcr_to_rgb};
use krawtex::krawtchouk::{krawtchouk_poly, hyp2f1_terminating, BANDS};
use krawtex::transform::{forward_moments, ikcl_exact, inverse_moments, kcl_apply, merge_cube, split_cube};
use krawtex::{BasisSet, CubeMode, KrawtchoukParams, PlanarImage, Plane, PolynomialMatrix};
use ndarray::Array2;
use proptest::prelude::*;

fn plane(h: usize, w: usize) -> impl Strategy<Value = Plane> {
    prop::collection::vec(-1.0f64..1.0, h * w).prop_map(move |v| Array2::from_shape_vec((h, w), v).unwrap())
}

fn sized_plane(max: usize) -> impl Strategy<Value = Plane> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| plane(h, w))
}

fn max_diff(a: &Plane, b: &Plane) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moments_are_linear(
        p in 0.1f64..0.9,
        (a, b) in (2usize..12).prop_flat_map(|n| (plane(n, n), plane(n, n))),
        alpha in -3.0f64..3.0,
    ) {
        let m = PolynomialMatrix::new(KrawtchoukParams::new(p, a.nrows()).unwrap());
        let combined = forward_moments(&(&a * alpha + &b), &m, &m).unwrap();
        let separate = forward_moments(&a, &m, &m).unwrap() * alpha + forward_moments(&b, &m, &m).unwrap();
        prop_assert!(max_diff(&combined, &separate) < 1e-10);
    }

    #[test]
    fn moments_keep_energy(p in 0.1f64..0.9, g in (2usize..12).prop_flat_map(|n| plane(n, n))) {
        let m = PolynomialMatrix::new(KrawtchoukParams::new(p, g.nrows()).unwrap());
        let q = forward_moments(&g, &m, &m).unwrap();
        let (eg, eq) = (g.mapv(|v| v * v).sum(), q.mapv(|v| v * v).sum());
        prop_assert!((eg - eq).abs() < 1e-10 * eg.max(1.0));
        prop_assert!(max_diff(&inverse_moments(&q, &m, &m).unwrap(), &g) < 1e-10);
    }

    #[test]
    fn recurrence_agrees_with_series(p in 0.05f64..0.95, size in 2usize..=12, n in 0usize..12, x in 0usize..12) {
        prop_assume!(n < size && x < size);
        let params = KrawtchoukParams::new(p, size).unwrap();
        let rec = krawtchouk_poly(n, x, &params).unwrap();
        let series = hyp2f1_terminating(n, x, size - 1, p).unwrap();
        prop_assert!((rec - series).abs() <= 1e-9 * rec.abs().max(series.abs()).max(1.0));
    }

    #[test]
    fn block_cube_inverts_on_any_shape(g in sized_plane(30)) {
        let basis = BasisSet::with_p(0.5).unwrap();
        let cube = kcl_apply(&g, &basis, CubeMode::Block).unwrap();
        prop_assert!(max_diff(&ikcl_exact(&cube, &basis).unwrap(), &g) < 1e-10);
    }

    #[test]
    fn split_covers_every_band_once(g in sized_plane(20), t in 1usize..BANDS) {
        let basis = BasisSet::with_p(0.5).unwrap();
        let cube = kcl_apply(&g, &basis, CubeMode::Block).unwrap();
        let split = split_cube(&cube, t).unwrap();
        prop_assert_eq!(split.low.len() + split.high.len(), BANDS);
        prop_assert_eq!(split.low.len(), t);
        prop_assert_eq!(merge_cube(split).unwrap(), cube);
    }

    #[test]
    fn ycbcr_roundtrip(r in plane(4, 5), g in plane(4, 5), b in plane(4, 5)) {
        let unit = |p: Plane| p.mapv(|v| (v + 1.0) / 2.0);
        let rgb = PlanarImage::rgb(unit(r), unit(g), unit(b)).unwrap();
        let back = ycbcr_to_rgb(&rgb_to_ycbcr(&rgb).unwrap());
        for (x, y) in rgb.channels().iter().zip(back.channels()) {
            prop_assert!(max_diff(x, y) < 1e-9);
        }
    }
}
