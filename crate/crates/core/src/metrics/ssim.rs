//! Gaussian-windowed SSIM and its analytic gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

pub const WINDOW_SIZE: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub c1: f64,
    pub c2: f64,
    /// Normalized 1-D Gaussian; the 2-D window is its outer product.
    pub window: Vec<f64>,
    pub dynamic_range: f64,
}

impl SsimConfig {
    /// `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2`, 11x11 Gaussian window with std 1.5.
    pub fn new(dynamic_range: f64) -> Self {
        let half = (WINDOW_SIZE / 2) as f64;
        let raw: Vec<f64> = (0..WINDOW_SIZE)
            .map(|k| (-((k as f64 - half).powi(2)) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        Self {
            c1: (0.01 * dynamic_range).powi(2),
            c2: (0.03 * dynamic_range).powi(2),
            window: raw.into_iter().map(|v| v / total).collect(),
            dynamic_range,
        }
    }

    pub fn size(&self) -> usize {
        self.window.len()
    }

    /// 2-D window weight at `(a, b)`.
    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.window[a] * self.window[b]
    }
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self::new(255.0)
    }
}

/// Windowed first and second moments over the valid region.
struct LocalStats<T> {
    h: usize,
    w: usize,
    mu_x: Vec<T>,
    mu_y: Vec<T>,
    exx: Vec<T>,
    eyy: Vec<T>,
    exy: Vec<T>,
}

fn filter_valid<T: Scalar>(img: &[T], h: usize, w: usize, win: &[T]) -> Vec<T> {
    let k = win.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![T::zero(); h * ow];
    for i in 0..h {
        let src = &img[i * w..(i + 1) * w];
        for j in 0..ow {
            rows[i * ow + j] = win.iter().zip(&src[j..j + k]).map(|(&a, &b)| a * b).sum();
        }
    }
    let mut out = vec![T::zero(); oh * ow];
    for i in 0..oh {
        for (t, &wt) in win.iter().enumerate() {
            let src = &rows[(i + t) * ow..(i + t + 1) * ow];
            for (o, &v) in out[i * ow..(i + 1) * ow].iter_mut().zip(src) {
                *o += wt * v;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`].
fn filter_valid_adjoint<T: Scalar>(map: &[T], h: usize, w: usize, win: &[T]) -> Vec<T> {
    let k = win.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![T::zero(); h * ow];
    for i in 0..oh {
        for (t, &wt) in win.iter().enumerate() {
            let dst = &mut rows[(i + t) * ow..(i + t + 1) * ow];
            for (d, &v) in dst.iter_mut().zip(&map[i * ow..(i + 1) * ow]) {
                *d += wt * v;
            }
        }
    }
    let mut out = vec![T::zero(); h * w];
    for i in 0..h {
        let dst = &mut out[i * w..(i + 1) * w];
        for j in 0..ow {
            let v = rows[i * ow + j];
            for (d, &wt) in dst[j..j + k].iter_mut().zip(win) {
                *d += wt * v;
            }
        }
    }
    out
}

fn local_stats<T: Scalar>(x: &Image<T>, y: &Image<T>, cfg: &SsimConfig) -> Result<LocalStats<T>> {
    x.ensure_same_dims(y, "ssim")?;
    let (h, w) = x.dims();
    let k = cfg.size();
    if h < k || w < k {
        return Err(Error::invalid(format!("image {h}x{w} is smaller than the {k}x{k} SSIM window")));
    }
    let win: Vec<T> = cfg.window.iter().map(|&v| T::lit(v)).collect();
    let xx: Vec<T> = x.data().iter().map(|&v| v * v).collect();
    let yy: Vec<T> = y.data().iter().map(|&v| v * v).collect();
    let xy: Vec<T> = x.data().iter().zip(y.data()).map(|(&a, &b)| a * b).collect();
    Ok(LocalStats {
        h: h + 1 - k,
        w: w + 1 - k,
        mu_x: filter_valid(x.data(), h, w, &win),
        mu_y: filter_valid(y.data(), h, w, &win),
        exx: filter_valid(&xx, h, w, &win),
        eyy: filter_valid(&yy, h, w, &win),
        exy: filter_valid(&xy, h, w, &win),
    })
}

/// Terms of the local SSIM at one window position.
struct Terms<T> {
    a1: T,
    a2: T,
    b1: T,
    b2: T,
}

fn terms<T: Scalar>(mx: T, my: T, exx: T, eyy: T, exy: T, c1: T, c2: T) -> Terms<T> {
    let two = T::lit(2.0);
    let sxx = exx - mx * mx;
    let syy = eyy - my * my;
    let sxy = exy - mx * my;
    Terms { a1: two * mx * my + c1, a2: two * sxy + c2, b1: mx * mx + my * my + c1, b2: sxx + syy + c2 }
}

/// Local SSIM over the valid region, `(H - 10) x (W - 10)` for the default window.
pub fn ssim_map<T: Scalar>(f: &Image<T>, g: &Image<T>, cfg: &SsimConfig) -> Result<Image<T>> {
    let st = local_stats(f, g, cfg)?;
    let (c1, c2) = (T::lit(cfg.c1), T::lit(cfg.c2));
    let data = (0..st.h * st.w)
        .map(|p| {
            let t = terms(st.mu_x[p], st.mu_y[p], st.exx[p], st.eyy[p], st.exy[p], c1, c2);
            (t.a1 * t.a2) / (t.b1 * t.b2)
        })
        .collect();
    Image::from_vec(st.h, st.w, data)
}

/// Mean SSIM.
pub fn ssim<T: Scalar>(f: &Image<T>, g: &Image<T>, cfg: &SsimConfig) -> Result<T> {
    Ok(ssim_map(f, g, cfg)?.mean())
}

/// Mean SSIM and its gradient with respect to `x`.
pub fn ssim_grad<T: Scalar>(x: &Image<T>, y: &Image<T>, cfg: &SsimConfig) -> Result<(T, Image<T>)> {
    let st = local_stats(x, y, cfg)?;
    let (c1, c2) = (T::lit(cfg.c1), T::lit(cfg.c2));
    let two = T::lit(2.0);
    let m = st.h * st.w;
    let inv_m = T::one() / T::from_usize(m).unwrap();
    let mut total = T::zero();
    let mut d_mu = vec![T::zero(); m];
    let mut d_exx = vec![T::zero(); m];
    let mut d_exy = vec![T::zero(); m];
    for p in 0..m {
        let (mx, my) = (st.mu_x[p], st.mu_y[p]);
        let t = terms(mx, my, st.exx[p], st.eyy[p], st.exy[p], c1, c2);
        let s = (t.a1 * t.a2) / (t.b1 * t.b2);
        total += s;
        let sm = s * inv_m;
        d_mu[p] = sm * (two * my / t.a1 - two * mx / t.b1 - two * my / t.a2 + two * mx / t.b2);
        d_exx[p] = -sm / t.b2;
        d_exy[p] = two * sm / t.a2;
    }
    let (h, w) = x.dims();
    let win: Vec<T> = cfg.window.iter().map(|&v| T::lit(v)).collect();
    let g_mu = filter_valid_adjoint(&d_mu, h, w, &win);
    let g_xx = filter_valid_adjoint(&d_exx, h, w, &win);
    let g_xy = filter_valid_adjoint(&d_exy, h, w, &win);
    let grad = (0..h * w)
        .map(|q| g_mu[q] + two * x.data()[q] * g_xx[q] + y.data()[q] * g_xy[q])
        .collect();
    Ok((total * inv_m, Image::from_vec(h, w, grad)?))
}
