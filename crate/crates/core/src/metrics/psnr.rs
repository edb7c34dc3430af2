use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::Image;
use crate::scalar::Scalar;

/// Peak of the 8-bit intensity convention all metrics use.
pub const PEAK: f64 = 255.0;

/// PSNR in dB, or the distinguished result for a zero-error pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Psnr {
    Identical,
    Db(f64),
}

impl Psnr {
    pub fn from_mse(mse: f64) -> Self {
        if mse == 0.0 {
            Psnr::Identical
        } else {
            Psnr::Db(10.0 * (PEAK * PEAK / mse).log10())
        }
    }

    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Db(v) => Some(v),
            Psnr::Identical => None,
        }
    }
}

pub fn mse<T: Scalar>(f: &Image<T>, g: &Image<T>) -> Result<f64> {
    f.ensure_same_dims(g, "mse")?;
    let sum: f64 = f
        .data()
        .iter()
        .zip(g.data())
        .map(|(&a, &b)| {
            let d = a.to_f64_lossy() - b.to_f64_lossy();
            d * d
        })
        .sum();
    Ok(sum / f.len() as f64)
}

/// Mean squared error restricted to pixels where `mask` holds.
pub fn mse_masked<T: Scalar>(f: &Image<T>, g: &Image<T>, mask: &[bool]) -> Result<f64> {
    f.ensure_same_dims(g, "mse_masked")?;
    if mask.len() != f.len() {
        return Err(crate::Error::shape("mask does not match the image"));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for ((&a, &b), &m) in f.data().iter().zip(g.data()).zip(mask) {
        if m {
            let d = a.to_f64_lossy() - b.to_f64_lossy();
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(crate::Error::invalid("empty mask"));
    }
    Ok(sum / n as f64)
}

/// `10 log10(255^2 / MSE)`.
pub fn psnr<T: Scalar>(f: &Image<T>, g: &Image<T>) -> Result<Psnr> {
    Ok(Psnr::from_mse(mse(f, g)?))
}
