use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// AdamW moments and hyperparameters for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimState {
    pub fn new(n_params: usize, lr: f64, weight_decay: f64) -> Self {
        OptimState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// One AdamW step with decoupled weight decay:
/// `p ← p − lr·(m̂/(√v̂ + eps) + weight_decay·p)`.
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut OptimState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(Error::InvalidInput(format!(
            "adamw shapes disagree: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= state.lr * (m_hat / (v_hat.sqrt() + state.eps) + state.weight_decay * params[i]);
    }
    Ok(())
}

/// Cosine annealing from `lr_max` at step 0 to `lr_min` at `total_steps`;
/// later steps stay at `lr_min`.
pub fn cosine_annealing_lr(step: u64, total_steps: u64, lr_min: f64, lr_max: f64) -> f64 {
    if step >= total_steps {
        return lr_min;
    }
    let phase = std::f64::consts::PI * step as f64 / total_steps as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + phase.cos())
}
