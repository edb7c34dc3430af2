//! 2-D planes and complex MR slices.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major `H x W` plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::full(height, width, T::zero())
    }

    pub fn full(height: usize, width: usize, v: T) -> Self {
        Self { height, width, data: vec![v; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "image {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.width + j] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { height: self.height, width: self.width, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.ensure_same_dims(other, "zip_map")?;
        Ok(Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn mean(&self) -> T {
        self.data.iter().copied().sum::<T>() / T::from_usize(self.data.len()).unwrap()
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64_lossy()).unwrap_or(U::nan())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_same_dims(&self, other: &Self, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// A complex slice stored as separate real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    pub re: Image<f64>,
    pub im: Image<f64>,
}

impl ComplexImage {
    pub fn new(re: Image<f64>, im: Image<f64>) -> Result<Self> {
        re.ensure_same_dims(&im, "complex image planes")?;
        Ok(Self { re, im })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { re: Image::zeros(height, width), im: Image::zeros(height, width) }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.re.dims()
    }

    pub fn magnitude(&self) -> Image<f64> {
        self.re.zip_map(&self.im, |a, b| a.hypot(b)).expect("planes share dims")
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self { re: self.re.zip_map(&other.re, |a, b| a + b)?, im: self.im.zip_map(&other.im, |a, b| a + b)? })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(Self { re: self.re.zip_map(&other.re, |a, b| a - b)?, im: self.im.zip_map(&other.im, |a, b| a - b)? })
    }

    pub fn scale(&self, k: f64) -> Self {
        Self { re: self.re.map(|v| v * k), im: self.im.map(|v| v * k) }
    }

    /// Complex mean of equally shaped images.
    pub fn average(images: &[ComplexImage]) -> Result<Self> {
        let first = images.first().ok_or_else(|| Error::invalid("cannot average zero images"))?;
        let mut acc = first.clone();
        for img in &images[1..] {
            acc = acc.add(img)?;
        }
        Ok(acc.scale(1.0 / images.len() as f64))
    }

    pub fn all_finite(&self) -> bool {
        self.re.all_finite() && self.im.all_finite()
    }
}
