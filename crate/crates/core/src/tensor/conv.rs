use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{gemm, MatRef, Scalar};

/// Spatial kernel extent. Every convolution is 3x3, stride 1, zero padding 1.
pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Kernels `[Cout, Cin, 3, 3]` and bias `[Cout]`.
///
/// The same type carries parameter gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T> {
    pub kernels: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn zeros(c_out: usize, c_in: usize) -> Self {
        Self { kernels: Tensor::zeros([c_out, c_in, KERNEL, KERNEL]), bias: vec![T::zero(); c_out] }
    }

    pub fn c_out(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.kernels.shape()[1]
    }

    fn validate(&self) -> Result<()> {
        let [co, _, kh, kw] = self.kernels.shape();
        if kh != KERNEL || kw != KERNEL {
            return Err(Error::shape(format!("kernel must be 3x3, got {kh}x{kw}")));
        }
        if self.bias.len() != co {
            return Err(Error::shape(format!("bias has {} entries for {co} output channels", self.bias.len())));
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        self.validate()?;
        let [_, c, h, w] = x.shape();
        if c != self.c_in() {
            return Err(Error::shape(format!(
                "conv2d expects {} input channels, got tensor {:?}",
                self.c_in(),
                x.shape()
            )));
        }
        if h == 0 || w == 0 {
            return Err(Error::shape(format!("conv2d input {:?} has an empty plane", x.shape())));
        }
        Ok(())
    }
}

/// Unfolds one sample `[Cin, H, W]` into `[Cin*9, H*W]` with zero padding.
fn im2col<T: Scalar>(x: &[T], c_in: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ci in 0..c_in {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for di in 0..KERNEL {
            for dj in 0..KERNEL {
                let row = &mut cols[(ci * TAPS + di * KERNEL + dj) * hw..][..hw];
                for i in 0..h {
                    let dst = &mut row[i * w..(i + 1) * w];
                    let si = i as isize + di as isize - 1;
                    if si < 0 || si >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[si as usize * w..(si as usize + 1) * w];
                    match dj {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `[Cin*9, H*W]` back onto `[Cin, H, W]`.
fn col2im_add<T: Scalar>(cols: &[T], c_in: usize, h: usize, w: usize, x: &mut [T]) {
    let hw = h * w;
    for ci in 0..c_in {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for di in 0..KERNEL {
            for dj in 0..KERNEL {
                let row = &cols[(ci * TAPS + di * KERNEL + dj) * hw..][..hw];
                for i in 0..h {
                    let si = i as isize + di as isize - 1;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    let src = &row[i * w..(i + 1) * w];
                    let dst = &mut plane[si as usize * w..(si as usize + 1) * w];
                    match dj {
                        0 => {
                            for (d, &s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                                *d += s;
                            }
                        }
                        1 => {
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                        _ => {
                            for (d, &s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Same-size 3x3 convolution (cross-correlation) with zero padding.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    p.check_input(x)?;
    let [n, c_in, h, w] = x.shape();
    let c_out = p.c_out();
    let hw = h * w;
    let mut out = Tensor::zeros([n, c_out, h, w]);
    let mut cols = vec![T::zero(); c_in * TAPS * hw];
    let weights = MatRef::new(p.kernels.data(), c_out, c_in * TAPS);
    for s in 0..n {
        im2col(x.sample(s), c_in, h, w, &mut cols);
        let dst = out.sample_mut(s);
        for (co, chunk) in dst.chunks_exact_mut(hw).enumerate() {
            chunk.fill(p.bias[co]);
        }
        gemm(weights, MatRef::new(&cols, c_in * TAPS, hw), T::one(), dst);
    }
    Ok(out)
}

/// Gradients of [`conv2d_forward`] with respect to its input and parameters.
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cached_x: &Tensor<T>,
    p: &ConvParams<T>,
) -> Result<(Tensor<T>, ConvParams<T>)> {
    p.check_input(cached_x)?;
    let [n, c_in, h, w] = cached_x.shape();
    let c_out = p.c_out();
    if grad_out.shape() != [n, c_out, h, w] {
        return Err(Error::shape(format!(
            "conv2d grad_out {:?} does not match forward output [{n}, {c_out}, {h}, {w}]",
            grad_out.shape()
        )));
    }
    let hw = h * w;
    let k = c_in * TAPS;
    let mut grad_x = Tensor::zeros(cached_x.shape());
    let mut grads = ConvParams::zeros(c_out, c_in);
    let mut cols = vec![T::zero(); k * hw];
    let mut grad_cols = vec![T::zero(); k * hw];
    let weights = MatRef::new(p.kernels.data(), c_out, k);
    for s in 0..n {
        let g = grad_out.sample(s);
        for (co, chunk) in g.chunks_exact(hw).enumerate() {
            grads.bias[co] += chunk.iter().copied().sum::<T>();
        }
        im2col(cached_x.sample(s), c_in, h, w, &mut cols);
        let g_mat = MatRef::new(g, c_out, hw);
        gemm(g_mat, MatRef::new(&cols, k, hw).t(), T::one(), grads.kernels.data_mut());
        gemm(weights.t(), g_mat, T::zero(), &mut grad_cols);
        col2im_add(&grad_cols, c_in, h, w, grad_x.sample_mut(s));
    }
    Ok((grad_x, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_kernel(c: usize) -> ConvParams<f64> {
        let mut p = ConvParams::zeros(c, c);
        for ch in 0..c {
            p.kernels.set(ch, ch, 1, 1, 1.0);
        }
        p
    }

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }
    }

    /// Direct definition, independent of im2col/gemm.
    fn brute_conv(x: &Tensor<f64>, p: &ConvParams<f64>) -> Tensor<f64> {
        let [n, c_in, h, w] = x.shape();
        Tensor::from_fn([n, p.c_out(), h, w], |[s, co, i, j]| {
            let mut acc = p.bias[co];
            for ci in 0..c_in {
                for di in 0..3 {
                    for dj in 0..3 {
                        let (si, sj) = (i as isize + di as isize - 1, j as isize + dj as isize - 1);
                        if si >= 0 && sj >= 0 && (si as usize) < h && (sj as usize) < w {
                            acc += x.at(s, ci, si as usize, sj as usize) * p.kernels.at(co, ci, di, dj);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut r = lcg(1);
        let x = Tensor::from_fn([2, 1, 5, 7], |_| r());
        let y = conv2d_forward(&x, &identity_kernel(1)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_on_ones_counts_neighbours() {
        let x = Tensor::<f64>::full([1, 1, 3, 3], 1.0);
        let mut p = ConvParams::zeros(1, 1);
        p.kernels = Tensor::full([1, 1, 3, 3], 1.0);
        let y = conv2d_forward(&x, &p).unwrap();
        assert_eq!(y, brute_conv(&x, &p));
        assert_eq!(y.at(0, 0, 1, 1), 9.0);
        assert_eq!(y.at(0, 0, 0, 1), 6.0);
        assert_eq!(y.at(0, 0, 1, 2), 6.0);
        assert_eq!(y.at(0, 0, 0, 0), 4.0);
        assert_eq!(y.at(0, 0, 2, 2), 4.0);
    }

    #[test]
    fn bias_only_on_zeros() {
        let x = Tensor::<f64>::zeros([1, 2, 4, 4]);
        let mut p = ConvParams::zeros(1, 2);
        p.bias[0] = 2.5;
        let y = conv2d_forward(&x, &p).unwrap();
        assert!(y.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn matches_brute_force_on_odd_shapes() {
        let mut r = lcg(7);
        for &(h, w) in &[(1, 1), (1, 4), (3, 1), (5, 6)] {
            let x = Tensor::from_fn([2, 3, h, w], |_| r());
            let mut p = ConvParams::zeros(4, 3);
            p.kernels = Tensor::from_fn([4, 3, 3, 3], |_| r());
            p.bias = (0..4).map(|_| r()).collect();
            let got = conv2d_forward(&x, &p).unwrap();
            assert!(got.max_abs_diff(&brute_conv(&x, &p)) < 1e-13);
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let x = Tensor::<f64>::zeros([1, 3, 4, 4]);
        let p = ConvParams::zeros(2, 2);
        assert!(matches!(conv2d_forward(&x, &p), Err(Error::Shape(_))));
        let g = Tensor::<f64>::zeros([1, 3, 4, 4]);
        let x2 = Tensor::<f64>::zeros([1, 2, 4, 4]);
        assert!(matches!(conv2d_backward(&g, &x2, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_grad_gives_zero_gradients() {
        let mut r = lcg(3);
        let x = Tensor::from_fn([1, 2, 4, 4], |_| r());
        let mut p = ConvParams::zeros(3, 2);
        p.kernels = Tensor::from_fn([3, 2, 3, 3], |_| r());
        let (gx, gp) = conv2d_backward(&Tensor::zeros([1, 3, 4, 4]), &x, &p).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(gp.kernels.data().iter().all(|&v| v == 0.0));
        assert!(gp.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_passes_gradient_through() {
        let mut r = lcg(5);
        let x = Tensor::from_fn([1, 1, 4, 6], |_| r());
        let g = Tensor::from_fn([1, 1, 4, 6], |_| r());
        let (gx, _) = conv2d_backward(&g, &x, &identity_kernel(1)).unwrap();
        assert_eq!(gx, g);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = lcg(11);
        let x = Tensor::from_fn([1, 2, 5, 5], |_| r());
        let mut p = ConvParams::zeros(2, 2);
        p.kernels = Tensor::from_fn([2, 2, 3, 3], |_| r());
        p.bias = vec![r(), r()];
        let loss = |x: &Tensor<f64>, p: &ConvParams<f64>| conv2d_forward(x, p).unwrap().sum_squares();
        let y = conv2d_forward(&x, &p).unwrap();
        let (gx, gp) = conv2d_backward(&y.scale(2.0), &x, &p).unwrap();
        let h = 1e-6;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let fd = (loss(&xp, &p) - loss(&xm, &p)) / (2.0 * h);
            assert!(rel(fd, gx.data()[i]) < 1e-6, "x[{i}]: fd {fd} vs {}", gx.data()[i]);
        }
        for i in 0..p.kernels.len() {
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp.kernels.data_mut()[i] += h;
            pm.kernels.data_mut()[i] -= h;
            let fd = (loss(&x, &pp) - loss(&x, &pm)) / (2.0 * h);
            assert!(rel(fd, gp.kernels.data()[i]) < 1e-6);
        }
        for i in 0..2 {
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp.bias[i] += h;
            pm.bias[i] -= h;
            let fd = (loss(&x, &pp) - loss(&x, &pm)) / (2.0 * h);
            assert!(rel(fd, gp.bias[i]) < 1e-6);
        }
    }
}
