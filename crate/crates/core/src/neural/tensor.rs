use crate::error::{Error, Result};
use crate::plane::Plane;

/// Dense `(batch, channels, height, width)` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: [usize; 4], value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// Single-element tensor.
    pub fn scalar(value: f64) -> Self {
        Self {
            shape: [1, 1, 1, 1],
            data: vec![value],
        }
    }

    /// Stacks single-channel planes into a `(n, 1, h, w)` batch.
    pub fn from_planes(planes: &[&Plane]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::ShapeMismatch("cannot batch zero planes".into()))?;
        let (h, w) = first.dim();
        let mut data = Vec::with_capacity(planes.len() * h * w);
        for p in planes {
            if p.dim() != (h, w) {
                return Err(Error::ShapeMismatch("batched planes differ in size".into()));
            }
            data.extend(p.iter());
        }
        Ok(Self {
            shape: [planes.len(), 1, h, w],
            data,
        })
    }

    /// Plane `(n, c)` as an owned matrix.
    pub fn plane(&self, n: usize, c: usize) -> Plane {
        let [_, _, h, w] = self.shape;
        let off = self.plane_offset(n, c);
        Plane::from_shape_vec((h, w), self.data[off..off + h * w].to_vec()).expect("plane size")
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn plane_offset(&self, n: usize, c: usize) -> usize {
        (n * self.shape[1] + c) * self.plane_len()
    }

    pub fn plane_slice(&self, n: usize, c: usize) -> &[f64] {
        let off = self.plane_offset(n, c);
        &self.data[off..off + self.plane_len()]
    }

    pub fn plane_slice_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let off = self.plane_offset(n, c);
        let len = self.plane_len();
        &mut self.data[off..off + len]
    }

    pub fn get(&self, idx: [usize; 4]) -> f64 {
        self.data[self.index(idx)]
    }

    pub fn set(&mut self, idx: [usize; 4], v: f64) {
        let i = self.index(idx);
        self.data[i] = v;
    }

    fn index(&self, [n, c, y, x]: [usize; 4]) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor4) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Fails with a diagnostic naming `what` if any entry is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }
}
