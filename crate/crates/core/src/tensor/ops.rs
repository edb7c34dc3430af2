use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Floor added under the square root of [`magnitude`].
pub const MAGNITUDE_EPS: f64 = 1e-12;

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the gradient where the forward input was strictly positive.
pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, cached_x: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.ensure_same_shape(cached_x, "relu_backward")?;
    let data = grad_out
        .data()
        .iter()
        .zip(cached_x.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(grad_out.shape(), data)
}

pub fn elementwise_add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.ensure_same_shape(b, "elementwise_add")?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::from_vec(a.shape(), data)
}

/// Stacks `b`'s channels after `a`'s.
pub fn channel_concat<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [na, ca, ha, wa] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(Error::shape(format!(
            "channel_concat: {:?} and {:?} disagree on N/H/W",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for s in 0..na {
        data.extend_from_slice(a.sample(s));
        data.extend_from_slice(b.sample(s));
    }
    Tensor::from_vec([na, ca + cb, ha, wa], data)
}

/// Splits a concatenated gradient back into the parts with `a_channels` first.
pub fn channel_concat_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    a_channels: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let c = grad_out.channels();
    if a_channels == 0 || a_channels >= c {
        return Err(Error::shape(format!("cannot split {c} channels at {a_channels}")));
    }
    Ok((grad_out.channel_slice(0, a_channels)?, grad_out.channel_slice(a_channels, c)?))
}

/// Averages channel `k` with channel `k + C/2`.
///
/// With the dual-NEX layout `[Re1, Im1, Re2, Im2]` this is the complex average
/// of the two acquisitions.
pub fn channel_mean_pair<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.shape();
    if c == 0 || c % 2 != 0 {
        return Err(Error::shape(format!("channel_mean_pair needs an even channel count, got {c}")));
    }
    let half = c / 2;
    let two = T::lit(2.0);
    let plane = h * w;
    let mut out = Tensor::zeros([n, half, h, w]);
    for s in 0..n {
        let src = x.sample(s);
        let dst = out.sample_mut(s);
        for (k, d) in dst.iter_mut().enumerate() {
            *d = (src[k] + src[k + half * plane]) / two;
        }
    }
    Ok(out)
}

pub fn channel_mean_pair_backward<T: Scalar>(grad_out: &Tensor<T>) -> Tensor<T> {
    let [n, half, h, w] = grad_out.shape();
    let mut out = Tensor::zeros([n, 2 * half, h, w]);
    let two = T::lit(2.0);
    for s in 0..n {
        let g = grad_out.sample(s);
        let dst = out.sample_mut(s);
        let (first, second) = dst.split_at_mut(g.len());
        for ((a, b), &v) in first.iter_mut().zip(second.iter_mut()).zip(g) {
            *a = v / two;
            *b = v / two;
        }
    }
    out
}

/// `sqrt(re^2 + im^2 + eps)` of a 2-channel complex tensor.
pub fn magnitude<T: Scalar>(x: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.shape();
    if c != 2 {
        return Err(Error::shape(format!("magnitude expects 2 channels (re, im), got {c}")));
    }
    let mut out = Tensor::zeros([n, 1, h, w]);
    for s in 0..n {
        let (re, im) = (x.plane(s, 0), x.plane(s, 1));
        for ((o, &a), &b) in out.plane_mut(s, 0).iter_mut().zip(re).zip(im) {
            *o = (a * a + b * b + eps).sqrt();
        }
    }
    Ok(out)
}

pub fn magnitude_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cached_x: &Tensor<T>,
    cached_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [n, _, h, w] = cached_x.shape();
    if grad_out.shape() != [n, 1, h, w] || cached_out.shape() != [n, 1, h, w] || cached_x.channels() != 2 {
        return Err(Error::shape("magnitude_backward shapes do not match the forward pass"));
    }
    let mut grad_x = Tensor::zeros(cached_x.shape());
    for s in 0..n {
        let g = grad_out.plane(s, 0);
        let r = cached_out.plane(s, 0);
        for ch in 0..2 {
            let x = cached_x.plane(s, ch);
            for (((d, &gv), &rv), &xv) in grad_x.plane_mut(s, ch).iter_mut().zip(g).zip(r).zip(x) {
                *d = gv * xv / rv;
            }
        }
    }
    Ok(grad_x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_and_its_gradient() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = Tensor::full([1, 1, 1, 3], 5.0);
        assert_eq!(relu_backward(&g, &x).unwrap().data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn concat_shapes_and_split() {
        let a = Tensor::<f64>::full([1, 2, 3, 3], 1.0);
        let b = Tensor::<f64>::full([1, 3, 3, 3], 2.0);
        let c = channel_concat(&a, &b).unwrap();
        assert_eq!(c.shape(), [1, 5, 3, 3]);
        let (ga, gb) = channel_concat_backward(&c, 2).unwrap();
        assert_eq!((ga, gb), (a, b));
        assert!(channel_concat(&Tensor::<f64>::zeros([1, 1, 3, 3]), &Tensor::zeros([1, 1, 3, 4])).is_err());
    }

    #[test]
    fn add_zero_is_identity() {
        let x = Tensor::<f64>::from_fn([2, 2, 2, 2], |[a, b, c, d]| (a + 2 * b + 3 * c + 5 * d) as f64);
        assert_eq!(elementwise_add(&x, &Tensor::zeros(x.shape())).unwrap(), x);
        assert!(elementwise_add(&x, &Tensor::zeros([1, 2, 2, 2])).is_err());
    }

    #[test]
    fn mean_pair_of_duplicated_channels() {
        let x = Tensor::<f64>::from_fn([1, 4, 2, 2], |[_, c, i, j]| ((c % 2) * 10 + i * 2 + j) as f64);
        let m = channel_mean_pair(&x).unwrap();
        assert_eq!(m, x.channel_slice(0, 2).unwrap());
        assert!(channel_mean_pair(&Tensor::<f64>::zeros([1, 3, 2, 2])).is_err());
        let g = channel_mean_pair_backward(&Tensor::<f64>::full([1, 2, 2, 2], 1.0));
        assert!(g.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn magnitude_pythagorean_and_degenerate() {
        let x = Tensor::<f64>::from_vec([1, 2, 1, 2], vec![3.0, 0.0, 4.0, 0.0]).unwrap();
        let r = magnitude(&x, 0.0).unwrap();
        assert_eq!(r.data()[0], 5.0);
        let r = magnitude(&x, MAGNITUDE_EPS).unwrap();
        assert!((r.data()[1] - 1e-6).abs() < 1e-18);
        let g = magnitude_backward(&Tensor::full([1, 1, 1, 2], 1.0), &x, &r).unwrap();
        assert!(g.all_finite());
        assert_eq!(g.at(0, 0, 0, 1), 0.0);
    }
}
