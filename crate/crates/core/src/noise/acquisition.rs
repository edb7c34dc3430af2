//! Multi-NEX acquisition with spatially varying complex Gaussian noise.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::{ComplexImage, Image};
use crate::rng::{self, ids};

/// Stack of `K` repeated acquisitions of one slice.
#[derive(Clone, Debug, PartialEq)]
pub struct NexSet {
    pub slices: Vec<ComplexImage>,
    /// Per-component noise standard deviation of one acquisition.
    pub sigma0: f64,
    /// Multiplies `sigma0` pointwise.
    pub gfactor: Image<f64>,
}

impl NexSet {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Complex average of acquisitions `range`.
    pub fn average(&self, range: std::ops::Range<usize>) -> Result<ComplexImage> {
        let part = self
            .slices
            .get(range.clone())
            .ok_or_else(|| Error::invalid(format!("NEX range {range:?} outside 0..{}", self.slices.len())))?;
        ComplexImage::average(part)
    }
}

/// Smooth noise-amplification map `1 + 0.8 exp(-r^2 / (2 s^2))`, `s = 0.25 min(H, W)`,
/// peaked off-centre at `(0.35 H, 0.65 W)`.
pub fn default_gfactor(height: usize, width: usize) -> Image<f64> {
    let (cy, cx) = (0.35 * height as f64, 0.65 * width as f64);
    let s = 0.25 * height.min(width) as f64;
    Image::from_fn(height, width, |i, j| {
        let r2 = (i as f64 - cy).powi(2) + (j as f64 - cx).powi(2);
        1.0 + 0.8 * (-r2 / (2.0 * s * s)).exp()
    })
}

pub fn uniform_gfactor(height: usize, width: usize) -> Image<f64> {
    Image::full(height, width, 1.0)
}

/// Draws `k` independent noisy copies of `clean`.
///
/// Acquisition `n` uses the stream `(seed, NOISE, n)`, so the first `k'`
/// acquisitions of a `k`-NEX draw equal a `k'`-NEX draw with the same seed.
pub fn acquire_nex(clean: &ComplexImage, sigma0: f64, gfactor: &Image<f64>, k: usize, seed: u64) -> Result<NexSet> {
    if !(sigma0 > 0.0) || !sigma0.is_finite() {
        return Err(Error::invalid(format!("sigma0 must be positive and finite, got {sigma0}")));
    }
    if k == 0 {
        return Err(Error::invalid("at least one NEX is required"));
    }
    if gfactor.dims() != clean.dims() {
        return Err(Error::shape("g-factor map does not match the image"));
    }
    if gfactor.data().iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
        return Err(Error::invalid("g-factor must be positive everywhere"));
    }
    let (h, w) = clean.dims();
    let slices = (0..k)
        .map(|n| {
            let mut r = rng::stream(seed, &[ids::NOISE, n as u64]);
            let mut re = clean.re.clone();
            let mut im = clean.im.clone();
            for idx in 0..h * w {
                let s = sigma0 * gfactor.data()[idx];
                let (nr, ni): (f64, f64) = (StandardNormal.sample(&mut r), StandardNormal.sample(&mut r));
                re.data_mut()[idx] += s * nr;
                im.data_mut()[idx] += s * ni;
            }
            ComplexImage { re, im }
        })
        .collect();
    Ok(NexSet { slices, sigma0, gfactor: gfactor.clone() })
}

/// Complex sum of two acquisitions.
pub fn signal_strengthened_map(a: &ComplexImage, b: &ComplexImage) -> Result<ComplexImage> {
    a.add(b)
}

/// Complex difference of two acquisitions; pure noise when the signal repeats.
pub fn noise_map(a: &ComplexImage, b: &ComplexImage) -> Result<ComplexImage> {
    a.sub(b)
}
