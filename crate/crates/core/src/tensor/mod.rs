//! Dense 4-D tensors and the layer primitives of the denoising network.
//!
//! There is no computation graph: each primitive has an explicit forward
//! function and a matching backward function that consumes whatever the
//! forward pass cached.

mod batchnorm;
mod conv;
mod ops;

pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormParams, Mode};
pub use conv::{conv2d_backward, conv2d_forward, ConvParams, KERNEL};
pub use ops::{
    channel_concat, channel_concat_backward, channel_mean_pair, channel_mean_pair_backward,
    elementwise_add, magnitude, magnitude_backward, relu, relu_backward, MAGNITUDE_EPS,
};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major `[N, C, H, W]` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: [usize; 4], value: T) -> Self {
        Self { shape, data: vec![value; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(Error::shape(format!(
                "tensor of shape {shape:?} needs {want} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for a in 0..n {
            for b in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        data.push(f([a, b, i, j]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    #[inline]
    pub fn offset(&self, n: usize, c: usize, i: usize, j: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + i) * self.shape[3] + j
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, i: usize, j: usize) -> T {
        self.data[self.offset(n, c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, i: usize, j: usize, v: T) {
        let o = self.offset(n, c, i, j);
        self.data[o] = v;
    }

    /// One `H x W` plane.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let len = self.plane_len();
        let start = (n * self.shape[1] + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let len = self.plane_len();
        let start = (n * self.shape[1] + c) * len;
        &mut self.data[start..start + len]
    }

    /// All channels of sample `n`, contiguous.
    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.shape[1] * self.plane_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.shape[1] * self.plane_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Copies samples `indices` into a new batch.
    pub fn gather(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.shape[1] * self.plane_len());
        for &n in indices {
            data.extend_from_slice(self.sample(n));
        }
        Self { shape: [indices.len(), self.shape[1], self.shape[2], self.shape[3]], data }
    }

    /// Copies a channel range `[from, to)` of every sample.
    pub fn channel_slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.shape[1] {
            return Err(Error::shape(format!(
                "channel range {from}..{to} out of bounds for {} channels",
                self.shape[1]
            )));
        }
        let plane = self.plane_len();
        let mut data = Vec::with_capacity(self.shape[0] * (to - from) * plane);
        for n in 0..self.shape[0] {
            let s = self.sample(n);
            data.extend_from_slice(&s[from * plane..to * plane]);
        }
        Ok(Self { shape: [self.shape[0], to - from, self.shape[2], self.shape[3]], data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64_lossy()).unwrap_or(U::nan())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

/// Concatenates batches along N. All parts must agree on C, H, W.
pub fn stack_batches<T: Scalar>(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts.first().ok_or_else(|| Error::shape("cannot stack zero tensors"))?;
    let [_, c, h, w] = first.shape();
    let mut data = Vec::new();
    let mut n = 0;
    for p in parts {
        if p.shape()[1..] != [c, h, w] {
            return Err(Error::shape(format!(
                "cannot stack {:?} onto [_, {c}, {h}, {w}]",
                p.shape()
            )));
        }
        n += p.batch();
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec([n, c, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f64>::from_vec([1, 2, 3, 4], vec![0.0; 24]).is_ok());
        assert!(matches!(
            Tensor::<f64>::from_vec([1, 2, 3, 4], vec![0.0; 23]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn indexing_is_row_major_nchw() {
        let t = Tensor::<f64>::from_fn([2, 3, 4, 5], |[n, c, i, j]| (n * 1000 + c * 100 + i * 10 + j) as f64);
        assert_eq!(t.data()[t.offset(1, 2, 3, 4)], 1234.0);
        assert_eq!(t.plane(1, 2)[3 * 5 + 4], 1234.0);
        let g = t.gather(&[1]);
        assert_eq!(g.at(0, 2, 3, 4), 1234.0);
        let s = t.channel_slice(1, 3).unwrap();
        assert_eq!(s.shape(), [2, 2, 4, 5]);
        assert_eq!(s.at(1, 1, 3, 4), 1234.0);
    }
}
