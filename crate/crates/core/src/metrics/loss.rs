//! Training loss on magnitude images: squared error combined with SSIM.

use serde::{Deserialize, Serialize};

use super::ssim::{ssim_grad, SsimConfig};
use crate::error::Result;
use crate::image::Image;
use crate::scalar::Scalar;

/// How the squared-error and SSIM terms are combined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum LossForm {
    /// `||p - t||^2 * (1 - SSIM(p, t))`.
    Product,
    /// `||p - t||^2 + weight * (1 - SSIM(p, t))`, for comparison runs.
    Sum { weight: f64 },
}

impl Default for LossForm {
    fn default() -> Self {
        LossForm::Product
    }
}

impl LossForm {
    pub fn label(&self) -> String {
        match self {
            LossForm::Product => "product".to_string(),
            LossForm::Sum { weight } => format!("sum(weight={weight})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts<T> {
    pub loss: T,
    pub squared_error: T,
    pub ssim: T,
}

fn squared_error<T: Scalar>(pred: &Image<T>, target: &Image<T>) -> T {
    pred.data().iter().zip(target.data()).map(|(&p, &t)| (p - t) * (p - t)).sum()
}

pub fn combined_loss<T: Scalar>(
    pred: &Image<T>,
    target: &Image<T>,
    cfg: &SsimConfig,
    form: LossForm,
) -> Result<LossParts<T>> {
    let ssim = super::ssim::ssim(pred, target, cfg)?;
    let err = squared_error(pred, target);
    Ok(LossParts { loss: combine(form, err, ssim), squared_error: err, ssim })
}

fn combine<T: Scalar>(form: LossForm, err: T, ssim: T) -> T {
    match form {
        LossForm::Product => err * (T::one() - ssim),
        LossForm::Sum { weight } => err + T::lit(weight) * (T::one() - ssim),
    }
}

/// Loss value and its gradient with respect to `pred` (product rule).
pub fn combined_loss_grad<T: Scalar>(
    pred: &Image<T>,
    target: &Image<T>,
    cfg: &SsimConfig,
    form: LossForm,
) -> Result<(LossParts<T>, Image<T>)> {
    let (ssim, ssim_g) = ssim_grad(pred, target, cfg)?;
    let err = squared_error(pred, target);
    let two = T::lit(2.0);
    let (err_coef, ssim_coef) = match form {
        LossForm::Product => (two * (T::one() - ssim), -err),
        LossForm::Sum { weight } => (two, -T::lit(weight)),
    };
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .zip(ssim_g.data())
        .map(|((&p, &t), &gs)| err_coef * (p - t) + ssim_coef * gs)
        .collect();
    let (h, w) = pred.dims();
    Ok((LossParts { loss: combine(form, err, ssim), squared_error: err, ssim }, Image::from_vec(h, w, grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn img(seed: u64, n: usize) -> Image<f64> {
        let mut r = crate::rng::stream(seed, &[]);
        Image::from_fn(n, n, |_, _| 255.0 * r.random::<f64>())
    }

    #[test]
    fn perfect_prediction_has_zero_loss_and_gradient() {
        let cfg = SsimConfig::default();
        let t = img(1, 16);
        let (parts, g) = combined_loss_grad(&t, &t, &cfg, LossForm::Product).unwrap();
        assert_eq!(parts.loss, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn squared_error_scales_quadratically() {
        let t = img(2, 16);
        let r = img(3, 16).map(|v| v / 255.0 - 0.5);
        for k in [0.5, 2.0, 3.0] {
            let p1 = t.zip_map(&r, |a, b| a + b).unwrap();
            let pk = t.zip_map(&r, |a, b| a + k * b).unwrap();
            let e1 = squared_error(&p1, &t);
            let ek = squared_error(&pk, &t);
            assert!((ek / e1 - k * k).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = SsimConfig::default();
        for form in [LossForm::Product, LossForm::Sum { weight: 50.0 }] {
            let p = img(4, 16);
            let t = img(5, 16);
            let (_, g) = combined_loss_grad(&p, &t, &cfg, form).unwrap();
            let h = 1e-3;
            for q in 0..p.len() {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp.data_mut()[q] += h;
                pm.data_mut()[q] -= h;
                let fd = (combined_loss(&pp, &t, &cfg, form).unwrap().loss
                    - combined_loss(&pm, &t, &cfg, form).unwrap().loss)
                    / (2.0 * h);
                let rel = (fd - g.data()[q]).abs() / fd.abs().max(g.data()[q].abs()).max(1e-6);
                assert!(rel < 1e-4, "{form:?} pixel {q}: {fd} vs {}", g.data()[q]);
            }
        }
    }
}
