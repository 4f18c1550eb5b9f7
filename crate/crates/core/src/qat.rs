//! Oscillation tracking and iterative freezing of latent weights.
//!
//! After every optimizer step the sign change `delta = sgn(w_t) - sgn(w_{t-1})`
//! of each latent entry is compared with the previous one. An oscillation is a
//! nonzero change in the opposite direction of the last nonzero-or-zero change
//! (`delta_t != delta_{t-1}` and `delta_t * delta_{t-1} != 0`). Its frequency is
//! tracked with an exponential moving average, and once freezing is active any
//! entry whose frequency exceeds the threshold is pinned to its sign for good.

use serde::{Deserialize, Serialize};

use crate::error::{LdcError, Result};
use crate::model::{sgn, LatentMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QatConfig {
    pub momentum: f64,
    pub threshold: f64,
    pub start_epoch: usize,
}

impl Default for QatConfig {
    fn default() -> Self {
        QatConfig {
            momentum: 0.01,
            threshold: 0.02,
            start_epoch: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationState {
    pub prev_sign: Vec<i8>,
    pub prev_delta: Vec<i8>,
    pub freq: Vec<f64>,
    pub m: f64,
    pub f_th: f64,
    pub active_from_epoch: usize,
}

impl OscillationState {
    pub fn new(latent: &LatentMatrix, cfg: QatConfig) -> Self {
        let len = latent.values().len();
        OscillationState {
            prev_sign: latent.signs(),
            prev_delta: vec![0; len],
            freq: vec![0.0; len],
            m: cfg.momentum,
            f_th: cfg.threshold,
            active_from_epoch: cfg.start_epoch,
        }
    }
}

/// Records one optimizer step. Returns the number of oscillations seen in this step.
pub fn update_oscillation(state: &mut OscillationState, values: &[f64]) -> Result<usize> {
    if values.len() != state.freq.len() {
        return Err(LdcError::Shape(format!(
            "{} latent values for an oscillation state of {}",
            values.len(),
            state.freq.len()
        )));
    }
    let mut count = 0;
    for (i, v) in values.iter().enumerate() {
        let s = sgn(*v);
        let delta = s - state.prev_sign[i];
        let prev = state.prev_delta[i];
        let o = delta != prev && delta * prev != 0;
        count += o as usize;
        state.freq[i] = state.m * if o { 1.0 } else { 0.0 } + (1.0 - state.m) * state.freq[i];
        state.prev_delta[i] = delta;
        state.prev_sign[i] = s;
    }
    Ok(count)
}

/// Freezes every entry whose oscillation frequency exceeds the threshold, once
/// `epoch` (0-based) has reached the start epoch. Returns how many entries were newly frozen.
pub fn apply_freezing(state: &OscillationState, latent: &mut LatentMatrix, epoch: usize) -> Result<usize> {
    if latent.values().len() != state.freq.len() {
        return Err(LdcError::Shape("oscillation state does not match the latent matrix".into()));
    }
    if epoch < state.active_from_epoch {
        return Ok(0);
    }
    let mut newly = 0;
    for (i, f) in state.freq.iter().enumerate() {
        if *f > state.f_th && !latent.frozen()[i] {
            latent.freeze(i);
            newly += 1;
        }
    }
    Ok(newly)
}
