//! Planar floating-point images.

use ndarray::Array2;

use crate::error::{Error, Result};

/// A single image channel, indexed `[row, column]`.
pub type Plane = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    Rgb,
    YCbCr,
    /// Single luma channel.
    Luma,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Rgb | ColorSpace::YCbCr => 3,
            ColorSpace::Luma => 1,
        }
    }
}

/// Image stored as one [`Plane`] per channel, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarImage {
    channels: Vec<Plane>,
    colorspace: ColorSpace,
}

impl PlanarImage {
    pub fn new(channels: Vec<Plane>, colorspace: ColorSpace) -> Result<Self> {
        if channels.len() != colorspace.channels() {
            return Err(Error::ShapeMismatch(format!(
                "{colorspace:?} image needs {} channels, got {}",
                colorspace.channels(),
                channels.len()
            )));
        }
        let dim = channels[0].dim();
        if dim.0 == 0 || dim.1 == 0 {
            return Err(Error::ShapeMismatch("image has zero extent".into()));
        }
        if channels.iter().any(|c| c.dim() != dim) {
            return Err(Error::ShapeMismatch(
                "all channels must share height and width".into(),
            ));
        }
        Ok(Self {
            channels,
            colorspace,
        })
    }

    pub fn rgb(r: Plane, g: Plane, b: Plane) -> Result<Self> {
        Self::new(vec![r, g, b], ColorSpace::Rgb)
    }

    pub fn luma(y: Plane) -> Result<Self> {
        Self::new(vec![y], ColorSpace::Luma)
    }

    /// Uniform image filled with one value per channel.
    pub fn filled(height: usize, width: usize, values: &[f64], colorspace: ColorSpace) -> Result<Self> {
        let channels = values
            .iter()
            .map(|&v| Array2::from_elem((height, width), v))
            .collect();
        Self::new(channels, colorspace)
    }

    pub fn colorspace(&self) -> ColorSpace {
        self.colorspace
    }

    pub fn channels(&self) -> &[Plane] {
        &self.channels
    }

    pub fn channel(&self, c: usize) -> &Plane {
        &self.channels[c]
    }

    pub fn into_channels(self) -> Vec<Plane> {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.channels[0].nrows()
    }

    pub fn width(&self) -> usize {
        self.channels[0].ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.channels[0].dim()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Clamps every sample into `[0, 1]`.
    pub fn clamped(mut self) -> Self {
        for c in &mut self.channels {
            c.mapv_inplace(|v| v.clamp(0.0, 1.0));
        }
        self
    }

    /// Rectangular crop of every channel.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height() || left + width > self.width() || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {}x{} image",
                self.height(),
                self.width()
            )));
        }
        let channels = self
            .channels
            .iter()
            .map(|c| {
                c.slice(ndarray::s![top..top + height, left..left + width])
                    .to_owned()
            })
            .collect();
        Ok(Self {
            channels,
            colorspace: self.colorspace,
        })
    }
}

/// Mirror-pads a plane (edge sample not repeated) by the given amounts.
pub fn reflect_pad(plane: &Plane, top: usize, bottom: usize, left: usize, right: usize) -> Plane {
    let (h, w) = plane.dim();
    Array2::from_shape_fn((h + top + bottom, w + left + right), |(r, c)| {
        let sr = reflect_index(r as isize - top as isize, h);
        let sc = reflect_index(c as isize - left as isize, w);
        plane[[sr, sc]]
    })
}

/// Maps an out-of-range coordinate back into `0..len` by mirroring about
/// the edge samples.
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= len as isize {
        m = period - m;
    }
    m as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_channels() {
        let a = Array2::zeros((2, 3));
        let b = Array2::zeros((3, 2));
        assert!(PlanarImage::rgb(a.clone(), a.clone(), b).is_err());
        assert!(PlanarImage::new(vec![a], ColorSpace::Rgb).is_err());
        assert!(PlanarImage::luma(Array2::zeros((0, 4))).is_err());
    }

    #[test]
    fn reflect_matches_numpy_convention() {
        // numpy.pad([0, 1, 2, 3], 3, mode="reflect") = [3 2 1 0 1 2 3 2 1 0]
        let idx: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }

    #[test]
    fn reflect_pad_keeps_interior() {
        let p = Array2::from_shape_fn((3, 4), |(r, c)| (r * 4 + c) as f64);
        let padded = reflect_pad(&p, 2, 1, 1, 3);
        assert_eq!(padded.dim(), (6, 8));
        assert_eq!(padded.slice(ndarray::s![2..5, 1..5]), p);
        assert_eq!(padded[[0, 1]], p[[2, 0]]);
    }
}
