use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment estimates for a list of named parameter blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub names: Vec<String>,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(blocks: &[(String, usize)]) -> Self {
        Self {
            names: blocks.iter().map(|(n, _)| n.clone()).collect(),
            m: blocks.iter().map(|(_, len)| vec![T::zero(); *len]).collect(),
            v: blocks.iter().map(|(_, len)| vec![T::zero(); *len]).collect(),
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn for_params(params: &[(String, &[T])]) -> Self {
        Self::new(&params.iter().map(|(n, s)| (n.clone(), s.len())).collect::<Vec<_>>())
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// non-finite or the blocks do not line up with the state.
pub fn adam_step<T: Scalar>(
    params: Vec<(String, &mut [T])>,
    grads: &[(String, &[T])],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.names.len() {
        return Err(Error::shape(format!(
            "adam: {} parameter blocks, {} gradient blocks, {} state blocks",
            params.len(),
            grads.len(),
            state.names.len()
        )));
    }
    for (i, ((pn, p), (gn, g))) in params.iter().zip(grads).enumerate() {
        if pn != gn || pn != &state.names[i] || p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::shape(format!("adam: block {i} mismatch ({pn} / {gn} / {})", state.names[i])));
        }
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient {gn}[{j}] = {}", g[j])));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let (one, eps) = (T::one(), T::lit(state.eps));
    let c1 = T::lit(1.0 - state.beta1.powi(t));
    let c2 = T::lit(1.0 - state.beta2.powi(t));
    let lr = T::lit(lr);
    for (i, ((_, p), (_, g))) in params.into_iter().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (one - b1) * g[k];
            v[k] = b2 * v[k] + (one - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.5f64, -2.0];
        let mut st = AdamState::new(&[("w".into(), 2)]);
        adam_step(vec![("w".into(), &mut p[..])], &[("w".into(), &[0.0, 0.0][..])], &mut st, 1e-4).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_by_hand() {
        let mut p = vec![0.0f64];
        let mut st = AdamState::new(&[("w".into(), 1)]);
        adam_step(vec![("w".into(), &mut p[..])], &[("w".into(), &[1.0][..])], &mut st, 1e-4).unwrap();
        // m_hat = 1, v_hat = 1
        assert!((p[0] - (-1e-4 / (1.0 + 1e-8))).abs() < 1e-12);
        assert!((p[0] + 9.99999e-5).abs() < 1e-10);
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut p = vec![1.0f32, 2.0];
        let mut st = AdamState::new(&[("layer.kernels".into(), 2)]);
        let err = adam_step(
            vec![("layer.kernels".into(), &mut p[..])],
            &[("layer.kernels".into(), &[0.1, f32::NAN][..])],
            &mut st,
            1e-3,
        )
        .unwrap_err();
        assert!(err.to_string().contains("layer.kernels[1]"));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(st.step, 0);
    }
}
