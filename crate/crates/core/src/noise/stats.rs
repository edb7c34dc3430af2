//! Noise statistics: Rayleigh moments and fits, local variance, histograms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Rayleigh moments of a noise-map magnitude with per-component std `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    pub sigma: f64,
    pub mu_r: f64,
    pub sigma_r2: f64,
}

/// `mu_R = sigma sqrt(pi/2)`, `sigma_R^2 = (2 - pi/2) sigma^2`.
pub fn rayleigh_moments(sigma: f64) -> Result<NoiseStats> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("Rayleigh sigma must be positive, got {sigma}")));
    }
    Ok(NoiseStats { sigma, mu_r: sigma * (PI / 2.0).sqrt(), sigma_r2: (2.0 - PI / 2.0) * sigma * sigma })
}

/// Maximum-likelihood Rayleigh scale `sqrt(mean(x^2) / 2)`.
pub fn fit_rayleigh(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSamples(format!("{} samples, need at least 2", samples.len())));
    }
    if samples.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid("Rayleigh samples must be finite and non-negative"));
    }
    let m2 = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
    if m2 == 0.0 {
        return Err(Error::DegenerateSamples("all samples are zero".into()));
    }
    Ok((m2 / 2.0).sqrt())
}

pub fn rayleigh_pdf(x: f64, sigma: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let s2 = sigma * sigma;
    x / s2 * (-x * x / (2.0 * s2)).exp()
}

pub fn rayleigh_cdf(x: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (-x * x / (2.0 * sigma * sigma)).exp()
    }
}

/// Unbiased variance over the centred `patch x patch` window, truncated at
/// the borders.
pub fn local_variance_map(img: &Image<f64>, patch: usize) -> Result<Image<f64>> {
    if patch < 3 || patch % 2 == 0 {
        return Err(Error::invalid(format!("patch must be odd and >= 3, got {patch}")));
    }
    let (h, w) = img.dims();
    if patch > h || patch > w {
        return Err(Error::invalid(format!("patch {patch} larger than image {h}x{w}")));
    }
    let r = patch / 2;
    Ok(Image::from_fn(h, w, |i, j| {
        let (i0, i1) = (i.saturating_sub(r), (i + r).min(h - 1));
        let (j0, j1) = (j.saturating_sub(r), (j + r).min(w - 1));
        let n = ((i1 - i0 + 1) * (j1 - j0 + 1)) as f64;
        let mut sum = 0.0;
        for a in i0..=i1 {
            for b in j0..=j1 {
                sum += img.get(a, b);
            }
        }
        let mean = sum / n;
        let mut ss = 0.0;
        for a in i0..=i1 {
            for b in j0..=j1 {
                ss += (img.get(a, b) - mean).powi(2);
            }
        }
        ss / (n - 1.0)
    }))
}

/// Pixelwise mean of equally sized maps.
pub fn mean_map(maps: &[Image<f64>]) -> Result<Image<f64>> {
    let first = maps.first().ok_or_else(|| Error::invalid("no maps to average"))?;
    let mut acc = first.clone();
    for m in &maps[1..] {
        acc = acc.zip_map(m, |a, b| a + b)?;
    }
    let k = maps.len() as f64;
    Ok(acc.map(|v| v / k))
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid("pearson needs two equally long series of length >= 2"));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::DegenerateSamples("constant series has no correlation".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Equal-width histogram over `[min, max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }
}

pub fn histogram(samples: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    if samples.is_empty() {
        return Err(Error::DegenerateSamples("histogram of no samples".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("histogram samples must be finite"));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|k| if k == bins { hi } else { lo + width * k as f64 }).collect();
    let mut counts = vec![0u64; bins];
    for &x in samples {
        let k = if width > 0.0 { (((x - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Pearson chi-squared statistic of `hist` against a Rayleigh law with scale
/// `sigma`. Adjacent bins are pooled until each expected count reaches 5.
pub fn rayleigh_chi2_statistic(hist: &Histogram, sigma: f64) -> f64 {
    let n = hist.total() as f64;
    let (mut obs, mut exp, mut stat) = (0.0, 0.0, 0.0);
    let bins = hist.counts.len();
    for k in 0..bins {
        let (a, b) = (hist.edges[k], hist.edges[k + 1]);
        // the outer bins absorb the tails
        let lo = if k == 0 { 0.0 } else { rayleigh_cdf(a, sigma) };
        let hi = if k + 1 == bins { 1.0 } else { rayleigh_cdf(b, sigma) };
        obs += hist.counts[k] as f64;
        exp += n * (hi - lo);
        if exp >= 5.0 {
            stat += (obs - exp).powi(2) / exp;
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 {
        stat += (obs - exp).powi(2) / exp;
    }
    stat
}

/// Noncentral chi-squared law of `|z|^2` for one complex channel (2 degrees
/// of freedom): `x / scale ~ chi2'(2, noncentrality)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NcChi2Fit {
    pub dof: u32,
    /// Per-component noise variance `s^2`.
    pub scale: f64,
    pub noncentrality: f64,
}

impl NcChi2Fit {
    /// Squared signal amplitude `A^2 = noncentrality * scale`.
    pub fn noncentral_power(&self) -> f64 {
        self.noncentrality * self.scale
    }

    pub fn mean(&self) -> f64 {
        self.scale * (self.dof as f64 + self.noncentrality)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let y = x / self.scale;
        let z = (self.noncentrality * y).sqrt();
        // 0.5 exp(-(y + lambda)/2) I0(z), with I0 kept scaled against overflow
        0.5 * (-(y + self.noncentrality) / 2.0 + z).exp() * bessel_i0_scaled(z) / self.scale
    }
}

/// `exp(-x) I0(x)` for `x >= 0` (polynomial approximations of the modified
/// Bessel function, absolute error below 2e-7).
fn bessel_i0_scaled(x: f64) -> f64 {
    if x < 3.75 {
        let t = (x / 3.75).powi(2);
        let i0 = 1.0
            + t * (3.5156229 + t * (3.0899424 + t * (1.2067492 + t * (0.2659732 + t * (0.0360768 + t * 0.0045813)))));
        i0 * (-x).exp()
    } else {
        let t = 3.75 / x;
        let p = 0.39894228
            + t * (0.01328592
                + t * (0.00225319
                    + t * (-0.00157565
                        + t * (0.00916281 + t * (-0.02057706 + t * (0.02635537 + t * (-0.01647633 + t * 0.00392377)))))));
        p / x.sqrt()
    }
}

const MIN_FIT_SAMPLES: usize = 100;

fn moments(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::DegenerateSamples(format!(
            "{} samples, the chi-squared fit needs at least {MIN_FIT_SAMPLES}",
            samples.len()
        )));
    }
    if samples.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid("squared magnitudes must be finite and non-negative"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if mean == 0.0 {
        return Err(Error::DegenerateSamples("all squared samples are zero".into()));
    }
    Ok((mean, var))
}

/// Moment-matched 2-dof noncentral chi-squared fit with both the scale and the
/// noncentrality unknown.
///
/// With `m = s^2 (2 + l)` and `v = 4 s^4 (1 + l)`, the physical root is
/// `s^2 = (m - sqrt(m^2 - v)) / 2`; a sample with `v > m^2` is treated as central.
pub fn chi2_overlay(samples_squared: &[f64]) -> Result<NcChi2Fit> {
    let (m, v) = moments(samples_squared)?;
    let disc = (m * m - v).max(0.0).sqrt();
    let scale = (m - disc) / 2.0;
    Ok(NcChi2Fit { dof: 2, scale, noncentrality: (m / scale - 2.0).max(0.0) })
}

/// Fit with a known per-component noise variance; the noncentrality follows
/// from the sample mean alone.
pub fn chi2_overlay_with_scale(samples_squared: &[f64], scale: f64) -> Result<NcChi2Fit> {
    if !(scale > 0.0) {
        return Err(Error::invalid("noise variance must be positive"));
    }
    let (m, _) = moments(samples_squared)?;
    Ok(NcChi2Fit { dof: 2, scale, noncentrality: (m / scale - 2.0).max(0.0) })
}
