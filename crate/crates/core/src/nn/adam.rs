use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Result};
use crate::math;

/// Bias-corrected Adam moments for one parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Steps skipped because a gradient was non-finite.
    pub skipped: u64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            skipped: 0,
        }
    }
}

/// One Adam update in place. Returns `Ok(false)` when the step was skipped
/// because `grads` contained a non-finite value.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<bool> {
    check_len("adam gradients", params.len(), grads.len())?;
    check_len("adam moments", params.len(), state.m.len())?;
    if grads.iter().any(|g| !g.is_finite()) {
        state.skipped += 1;
        log::warn!(
            "skipping optimizer step {}: non-finite gradient ({} skipped so far)",
            state.step + 1,
            state.skipped
        );
        return Ok(false);
    }
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - math::powf(b1, state.step as f64);
    let bc2 = 1.0 - math::powf(b2, state.step as f64);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (math::sqrt(v_hat) + state.eps);
    }
    Ok(true)
}
