//! Procedural clear scenes for experiments and tests.
//!
//! Each scene is a colour gradient overlaid with random flat shapes and a
//! faint periodic texture, giving both smooth regions and sharp edges.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::haze::{apply_haze, synthetic_depth, DepthPattern};
use crate::plane::{PlanarImage, Plane};

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut c = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
    // Saturated colours: one channel close to zero.
    if rng.gen_bool(0.5) {
        c[rng.gen_range(0..3)] *= 0.15;
    }
    c
}

/// Deterministic RGB test scene.
pub fn textured_scene(height: usize, width: usize, seed: u64) -> PlanarImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_CAFE);
    let top = random_color(&mut rng);
    let bottom = random_color(&mut rng);
    let (hf, wf) = (height as f64, width as f64);

    let mut planes: Vec<Plane> = (0..3)
        .map(|c| {
            Array2::from_shape_fn((height, width), |(r, _)| {
                let s = r as f64 / hf.max(1.0);
                top[c] * (1.0 - s) + bottom[c] * s
            })
        })
        .collect();

    let shapes = rng.gen_range(5..10);
    for _ in 0..shapes {
        let color = random_color(&mut rng);
        let cy = rng.gen_range(0.0..hf);
        let cx = rng.gen_range(0.0..wf);
        let ry = rng.gen_range(0.08..0.3) * hf;
        let rx = rng.gen_range(0.08..0.3) * wf;
        let disc = rng.gen_bool(0.5);
        for r in 0..height {
            for c in 0..width {
                let (dy, dx) = ((r as f64 - cy) / ry, (c as f64 - cx) / rx);
                let inside = if disc {
                    dy * dy + dx * dx <= 1.0
                } else {
                    dy.abs() <= 1.0 && dx.abs() <= 1.0
                };
                if inside {
                    for (ch, plane) in planes.iter_mut().enumerate() {
                        plane[[r, c]] = color[ch];
                    }
                }
            }
        }
    }

    let fy = rng.gen_range(0.1..0.6);
    let fx = rng.gen_range(0.1..0.6);
    let amp = rng.gen_range(0.02..0.08);
    for plane in planes.iter_mut() {
        for ((r, c), v) in plane.indexed_iter_mut() {
            *v = (*v + amp * (fy * r as f64).sin() * (fx * c as f64).cos()).clamp(0.0, 1.0);
        }
    }
    PlanarImage::new(planes, crate::plane::ColorSpace::Rgb).expect("three equal planes")
}

/// A clear scene with a hazy counterpart whose transmission spans
/// `[t_min, t_max]` along a smooth random depth field.
#[derive(Debug, Clone)]
pub struct HazyPair {
    pub clear: PlanarImage,
    pub hazy: PlanarImage,
    pub transmission: Plane,
}

pub fn hazy_pair(height: usize, width: usize, seed: u64, airlight: f64, t_min: f64, t_max: f64) -> HazyPair {
    let clear = textured_scene(height, width, seed);
    let field = synthetic_depth(height, width, DepthPattern::Smooth { seed: seed.wrapping_add(1) }, 1.0);
    let transmission = field.mapv(|u| t_max - (t_max - t_min) * u);
    let hazy = apply_haze(&clear, &transmission, [airlight; 3]);
    HazyPair {
        clear,
        hazy,
        transmission,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic_and_in_range() {
        let a = textured_scene(32, 40, 3);
        assert_eq!(a, textured_scene(32, 40, 3));
        assert_ne!(a, textured_scene(32, 40, 4));
        assert!(a.channels().iter().all(|c| c.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn pair_transmission_range() {
        let pair = hazy_pair(32, 32, 1, 0.8, 0.3, 0.7);
        let lo = pair.transmission.fold(1.0f64, |a, &b| a.min(b));
        let hi = pair.transmission.fold(0.0f64, |a, &b| a.max(b));
        assert!((lo - 0.3).abs() < 1e-12 && (hi - 0.7).abs() < 1e-12);
    }
}
