//! Deterministic inputs shared by the benchmarks.

use krawtex::colorspace::rgb_to_ycbcr;
use krawtex::scenes::textured_scene;
use krawtex::{PlanarImage, Plane, Tensor4};

pub fn rgb_scene(side: usize) -> PlanarImage {
    textured_scene(side, side, 11)
}

pub fn luma(side: usize) -> Plane {
    rgb_to_ycbcr(&rgb_scene(side)).expect("rgb scene").y
}

/// `batch` copies of a luma channel as an `N x 1 x side x side` tensor.
pub fn luma_batch(batch: usize, side: usize) -> Tensor4 {
    let y = luma(side);
    let planes: Vec<&Plane> = (0..batch).map(|_| &y).collect();
    Tensor4::from_planes(&planes).expect("equal planes")
}
