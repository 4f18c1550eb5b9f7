use serde::{Deserialize, Serialize};

use crate::error::{LdcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one parameter tensor, with a learning rate decaying
/// linearly from `lr0` to zero over `total_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr0: f64,
    pub total_steps: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, lr0: f64, total_steps: u64) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr0,
            total_steps,
            config: AdamConfig::default(),
        }
    }

    /// Learning rate used by the next step.
    pub fn current_lr(&self) -> f64 {
        if self.total_steps == 0 {
            return 0.0;
        }
        self.lr0 * (1.0 - self.t as f64 / self.total_steps as f64).max(0.0)
    }
}

/// One Adam update. Gradients are clipped elementwise to `[-clip, clip]`;
/// entries flagged in `frozen` keep their value and moments.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    frozen: Option<&[bool]>,
    state: &mut AdamState,
    clip: f64,
) -> Result<()> {
    if state.total_steps == 0 {
        return Err(LdcError::Config("Adam schedule needs total_steps > 0".into()));
    }
    if clip <= 0.0 {
        return Err(LdcError::Config(format!("gradient clip must be positive, got {clip}")));
    }
    if grads.len() != params.len() || state.m.len() != params.len() || frozen.is_some_and(|f| f.len() != params.len()) {
        return Err(LdcError::Shape(format!(
            "Adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    let lr = state.current_lr();
    state.t += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..params.len() {
        if frozen.is_some_and(|f| f[i]) {
            continue;
        }
        let g = grads[i].clamp(-clip, clip);
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        if lr > 0.0 {
            params[i] -= lr * (state.m[i] / bc1) / ((state.v[i] / bc2).sqrt() + eps);
        }
    }
    Ok(())
}
