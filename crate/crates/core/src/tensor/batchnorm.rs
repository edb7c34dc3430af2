use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel affine parameters and running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub epsilon: T,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::lit(DEFAULT_MOMENTUM),
            epsilon: T::lit(DEFAULT_EPSILON),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn validate(&self, channels: usize) -> Result<()> {
        let c = self.gamma.len();
        if self.beta.len() != c || self.running_mean.len() != c || self.running_var.len() != c {
            return Err(Error::shape("batch-norm parameter vectors differ in length"));
        }
        if c != channels {
            return Err(Error::shape(format!("batch-norm has {c} channels, input has {channels}")));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::invalid("batch-norm epsilon must be positive"));
        }
        Ok(())
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// estimates. The running variance uses the unbiased batch variance.
    pub fn update_running_stats(&mut self, cache: &BatchNormCache<T>) -> Result<()> {
        if cache.mode != Mode::Train {
            return Err(Error::invalid("running statistics come from train-mode passes only"));
        }
        if cache.mean.len() != self.channels() {
            return Err(Error::shape("batch-norm cache does not match parameters"));
        }
        let m = self.momentum;
        let keep = T::one() - m;
        let count = T::from_usize(cache.count).unwrap_or_else(T::one);
        let unbias = count / (count - T::one());
        for c in 0..self.channels() {
            self.running_mean[c] = keep * self.running_mean[c] + m * cache.mean[c];
            self.running_var[c] = keep * self.running_var[c] + m * cache.var[c] * unbias;
        }
        Ok(())
    }
}

/// Whatever the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub mode: Mode,
    /// Normalized input before the affine transform.
    pub xhat: Tensor<T>,
    /// Biased batch mean/variance (train) or the running ones (eval).
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub inv_std: Vec<T>,
    pub gamma: Vec<T>,
    /// Elements per channel, `N*H*W`.
    pub count: usize,
}

pub fn batchnorm_forward<T: Scalar>(
    x: &Tensor<T>,
    p: &BatchNormParams<T>,
    mode: Mode,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let [n, c, h, w] = x.shape();
    p.validate(c)?;
    let count = n * h * w;
    if mode == Mode::Train && count < 2 {
        return Err(Error::invalid(format!(
            "train-mode batch norm needs N*H*W >= 2 per channel, got {count}"
        )));
    }
    let (mean, var) = match mode {
        Mode::Train => batch_stats(x),
        Mode::Eval => (p.running_mean.clone(), p.running_var.clone()),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + p.epsilon).sqrt()).collect();
    let mut xhat = Tensor::zeros(x.shape());
    let mut out = Tensor::zeros(x.shape());
    for s in 0..n {
        for ch in 0..c {
            let (mu, is, g, b) = (mean[ch], inv_std[ch], p.gamma[ch], p.beta[ch]);
            let src = x.plane(s, ch);
            let xh = xhat.plane_mut(s, ch);
            for (d, &v) in xh.iter_mut().zip(src) {
                *d = (v - mu) * is;
            }
            let xh = xhat.plane(s, ch);
            for (o, &v) in out.plane_mut(s, ch).iter_mut().zip(xh) {
                *o = g * v + b;
            }
        }
    }
    Ok((out, BatchNormCache { mode, xhat, mean, var, inv_std, gamma: p.gamma.clone(), count }))
}

/// Two-pass per-channel mean and biased variance over `(N, H, W)`.
fn batch_stats<T: Scalar>(x: &Tensor<T>) -> (Vec<T>, Vec<T>) {
    let [n, c, h, w] = x.shape();
    let count = T::from_usize(n * h * w).unwrap();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut acc = T::zero();
        for s in 0..n {
            acc += x.plane(s, ch).iter().copied().sum::<T>();
        }
        let mu = acc / count;
        let mut sq = T::zero();
        for s in 0..n {
            sq += x.plane(s, ch).iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
        }
        mean[ch] = mu;
        var[ch] = sq / count;
    }
    (mean, var)
}

/// Returns `(grad_x, grad_gamma, grad_beta)` for a train-mode forward pass.
pub fn batchnorm_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &BatchNormCache<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    if cache.mode != Mode::Train {
        return Err(Error::invalid("batch-norm backward requires a train-mode cache"));
    }
    grad_out.ensure_same_shape(&cache.xhat, "batchnorm_backward")?;
    let [n, c, _, _] = grad_out.shape();
    let m = T::from_usize(cache.count).unwrap();
    let mut grad_gamma = vec![T::zero(); c];
    let mut grad_beta = vec![T::zero(); c];
    for ch in 0..c {
        for s in 0..n {
            let g = grad_out.plane(s, ch);
            let xh = cache.xhat.plane(s, ch);
            grad_beta[ch] += g.iter().copied().sum::<T>();
            grad_gamma[ch] += g.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
        }
    }
    // dx = gamma * inv_std / m * (m * dy - sum(dy) - xhat * sum(dy * xhat))
    let mut grad_x = Tensor::zeros(grad_out.shape());
    for ch in 0..c {
        let scale = cache.gamma[ch] * cache.inv_std[ch] / m;
        let (sum_dy, sum_dy_xhat) = (grad_beta[ch], grad_gamma[ch]);
        for s in 0..n {
            let g = grad_out.plane(s, ch);
            let xh = cache.xhat.plane(s, ch);
            for ((d, &dy), &xv) in grad_x.plane_mut(s, ch).iter_mut().zip(g).zip(xh) {
                *d = scale * (m * dy - sum_dy - xv * sum_dy_xhat);
            }
        }
    }
    Ok((grad_x, grad_gamma, grad_beta))
}
