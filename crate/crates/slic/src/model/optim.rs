//! Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).

use crate::error::{Error, Result};

use super::math::Real;
use super::ModelParams;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OptimizerState<R: Real> {
    pub step: u64,
    pub lr: f64,
    pub m: Vec<R>,
    pub v: Vec<R>,
}

impl<R: Real> OptimizerState<R> {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self { step: 0, lr, m: vec![R::zero(); param_count], v: vec![R::zero(); param_count] }
    }
}

/// One optimizer step. Consumes and returns the parameter value and state;
/// rejects non-finite gradients and shape mismatches.
pub fn apply_update<R: Real>(
    params: ModelParams<R>,
    grads: &[R],
    state: OptimizerState<R>,
) -> Result<(ModelParams<R>, OptimizerState<R>)> {
    if grads.len() != params.flat.len() || state.m.len() != params.flat.len() {
        return Err(Error::Model(format!(
            "shape mismatch: params {}, grads {}, moments {}",
            params.flat.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradients"));
    }
    let mut params = params;
    let mut state = state;
    state.step += 1;
    let t = state.step as i32;
    let b1 = R::from_f64(BETA1);
    let b2 = R::from_f64(BETA2);
    let eps = R::from_f64(ADAM_EPS);
    let corr1 = R::from_f64(1.0 - BETA1.powi(t));
    let corr2 = R::from_f64(1.0 - BETA2.powi(t));
    let lr = R::from_f64(state.lr);
    for i in 0..params.flat.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (R::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (R::one() - b2) * g * g;
        let m_hat = state.m[i] / corr1;
        let v_hat = state.v[i] / corr2;
        params.flat[i] = params.flat[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok((params, state))
}
