//! Full-range BT.601 RGB <-> YCbCr conversion.
//!
//! Only the luma plane is processed by the network; chroma planes are
//! carried through untouched and recombined at the end.

use ndarray::Zip;

use crate::error::{Error, Result};
use crate::plane::{ColorSpace, PlanarImage, Plane};

const KR: f64 = 0.299;
const KB: f64 = 0.114;
const CB_SCALE: f64 = 2.0 * (1.0 - KB);
const CR_SCALE: f64 = 2.0 * (1.0 - KR);

#[derive(Debug, Clone, PartialEq)]
pub struct YCbCrImage {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
}

impl YCbCrImage {
    pub fn new(y: Plane, cb: Plane, cr: Plane) -> Result<Self> {
        if y.dim() != cb.dim() || y.dim() != cr.dim() {
            return Err(Error::ShapeMismatch(
                "Y, Cb and Cr planes must share a shape".into(),
            ));
        }
        Ok(Self { y, cb, cr })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.y.dim()
    }

    /// Swaps in a new luma plane, keeping both chroma planes as they are.
    pub fn with_luma(self, y: Plane) -> Result<Self> {
        Self::new(y, self.cb, self.cr)
    }

    pub fn into_planar(self) -> PlanarImage {
        PlanarImage::new(vec![self.y, self.cb, self.cr], ColorSpace::YCbCr)
            .expect("planes share a shape")
    }
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    // Written relative to G so that gray input yields exactly its intensity.
    g + KR * (r - g) + KB * (b - g)
}

pub fn rgb_to_ycbcr(image: &PlanarImage) -> Result<YCbCrImage> {
    if image.colorspace() != ColorSpace::Rgb {
        return Err(Error::InvalidParameter(format!(
            "expected an RGB image, got {:?}",
            image.colorspace()
        )));
    }
    let [r, g, b] = [image.channel(0), image.channel(1), image.channel(2)];
    let y = Zip::from(r).and(g).and(b).map_collect(|&r, &g, &b| luma(r, g, b));
    let cb = Zip::from(b).and(&y).map_collect(|&b, &y| 0.5 + (b - y) / CB_SCALE);
    let cr = Zip::from(r).and(&y).map_collect(|&r, &y| 0.5 + (r - y) / CR_SCALE);
    YCbCrImage::new(y, cb, cr)
}

/// Inverse transform; the result is clamped to `[0, 1]`.
pub fn ycbcr_to_rgb(image: &YCbCrImage) -> PlanarImage {
    let r = Zip::from(&image.y)
        .and(&image.cr)
        .map_collect(|&y, &cr| y + CR_SCALE * (cr - 0.5));
    let b = Zip::from(&image.y)
        .and(&image.cb)
        .map_collect(|&y, &cb| y + CB_SCALE * (cb - 0.5));
    let g = Zip::from(&image.y)
        .and(&r)
        .and(&b)
        .map_collect(|&y, &r, &b| y + (KR * (y - r) + KB * (y - b)) / (1.0 - KR - KB));
    PlanarImage::rgb(r, g, b)
        .expect("planes share a shape")
        .clamped()
}
