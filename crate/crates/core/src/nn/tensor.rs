use std::ops::{Index, IndexMut};

use rand::Rng;

use crate::error::{Error, Result};

/// Spatial axis of a volumetric tensor. `X` is the slowest-varying spatial
/// dimension, so linear voxel indices are x-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Channel-major volume shape `(channels, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub dims: [usize; 3],
}

impl Shape {
    pub fn new(channels: usize, dims: [usize; 3]) -> Self {
        Shape { channels, dims }
    }

    pub fn cube(channels: usize, side: usize) -> Self {
        Shape::new(channels, [side; 3])
    }

    pub fn voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn len(&self) -> usize {
        self.channels * self.voxels()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dense volumetric array of 64-bit reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor { shape, data: vec![0.0; shape.len()] }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Tensor { shape, data: vec![value; shape.len()] }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} values for shape {:?} ({} expected)",
                data.len(),
                shape,
                shape.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn random_uniform<R: Rng>(shape: Shape, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..shape.len()).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn dims(&self) -> [usize; 3] {
        self.shape.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, c: usize, x: usize, y: usize, z: usize) -> usize {
        let [_, dy, dz] = self.shape.dims;
        ((c * self.shape.dims[0] + x) * dy + y) * dz + z
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.shape.voxels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.shape.voxels();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.expect_shape(other.shape, "zip_map")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape, data })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_shape(other.shape, "add")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.expect_shape(other.shape, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn expect_shape(&self, shape: Shape, what: &str) -> Result<()> {
        if self.shape != shape {
            return Err(Error::Shape(format!("{what}: {:?} vs {:?}", self.shape, shape)));
        }
        Ok(())
    }

    /// Concatenates tensors along the channel axis.
    pub fn concat_channels(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let dims = first.dims();
        let mut channels = 0;
        for p in parts {
            if p.dims() != dims {
                return Err(Error::Shape(format!("concat: {:?} vs {:?}", p.dims(), dims)));
            }
            channels += p.channels();
        }
        let mut data = Vec::with_capacity(channels * first.shape.voxels());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor { shape: Shape::new(channels, dims), data })
    }

    /// Splits along channels into consecutive groups of the given widths.
    pub fn split_channels(&self, widths: &[usize]) -> Result<Vec<Tensor>> {
        if widths.iter().sum::<usize>() != self.channels() {
            return Err(Error::Shape(format!(
                "split {:?} of {} channels",
                widths,
                self.channels()
            )));
        }
        let n = self.shape.voxels();
        let mut start = 0;
        Ok(widths
            .iter()
            .map(|&w| {
                let data = self.data[start * n..(start + w) * n].to_vec();
                start += w;
                Tensor { shape: Shape::new(w, self.dims()), data }
            })
            .collect())
    }
}

impl Index<usize> for Tensor {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Tensor {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// A named trainable array with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub dims: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, value: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), value.len());
        let grad = vec![0.0; value.len()];
        Param { name: name.into(), dims, value, grad }
    }

    pub fn zeros(name: impl Into<String>, dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Param::new(name, dims, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}
