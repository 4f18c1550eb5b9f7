//! Normalizers with hand-derived backward passes.
//!
//! [`BnLayer`] normalizes each column over the batch. It also supports weighted
//! batches, where row `r` stands for `weights[r]` identical samples; the backward
//! pass then takes the upstream gradient already summed over those copies. The
//! value network uses this to normalize over every feature occurrence in a batch
//! while only evaluating each distinct level once.

use serde::{Deserialize, Serialize};

use super::tensor::DenseTensor;
use crate::error::{LdcError, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Per-dimension batch normalization with affine parameters and running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnLayer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    mode: Mode,
    xhat: DenseTensor,
    /// `1/sqrt(var + eps)` per column (batch variance in train mode, running in eval).
    inv_std: Vec<f64>,
    weights: Option<Vec<f64>>,
    total: f64,
}

impl BnCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn normalized(&self) -> &DenseTensor {
        &self.xhat
    }

    pub fn inv_std(&self) -> &[f64] {
        &self.inv_std
    }
}

/// Biased batch mean and variance of one train-mode forward pass.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

/// Gradients of a normalizer: input gradient plus per-dimension affine gradients.
#[derive(Debug, Clone)]
pub struct NormGrads {
    pub dx: DenseTensor,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

impl BnLayer {
    pub fn new(dim: usize) -> Self {
        BnLayer {
            w: vec![1.0; dim],
            b: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Eval-mode output for dimension `d`. Threshold folding relies on this exact
    /// expression, so every eval path goes through here.
    #[inline]
    pub fn eval_one(&self, d: usize, x: f64) -> f64 {
        (x - self.running_mean[d]) / (self.running_var[d] + self.eps).sqrt() * self.w[d] + self.b[d]
    }

    pub fn forward(&mut self, y: &DenseTensor, mode: Mode) -> Result<(DenseTensor, BnCache)> {
        let (out, cache, stats) = self.forward_stateless(y, None, mode)?;
        if let Some(stats) = stats {
            self.commit(&stats);
        }
        Ok((out, cache))
    }

    /// Forward pass where row `r` counts as `weights[r]` samples. Rows with zero
    /// weight are still transformed but do not affect the statistics.
    pub fn forward_weighted(&mut self, y: &DenseTensor, weights: &[f64], mode: Mode) -> Result<(DenseTensor, BnCache)> {
        if weights.len() != y.rows() {
            return Err(LdcError::Shape(format!(
                "{} weights for {} rows",
                weights.len(),
                y.rows()
            )));
        }
        let (out, cache, stats) = self.forward_stateless(y, Some(weights), mode)?;
        if let Some(stats) = stats {
            self.commit(&stats);
        }
        Ok((out, cache))
    }

    /// Folds batch statistics into the running averages.
    pub fn commit(&mut self, stats: &BatchStats) {
        let unbias = stats.count / (stats.count - 1.0);
        for d in 0..self.dim() {
            self.running_mean[d] = (1.0 - self.momentum) * self.running_mean[d] + self.momentum * stats.mean[d];
            self.running_var[d] = (1.0 - self.momentum) * self.running_var[d] + self.momentum * stats.var[d] * unbias;
        }
    }

    /// Forward pass that leaves the running statistics alone. In train mode the
    /// batch statistics are returned for a later [`BnLayer::commit`].
    pub fn forward_stateless(
        &self,
        y: &DenseTensor,
        weights: Option<&[f64]>,
        mode: Mode,
    ) -> Result<(DenseTensor, BnCache, Option<BatchStats>)> {
        let (rows, cols) = y.shape();
        if cols != self.dim() {
            return Err(LdcError::Shape(format!("BN over {} dims, input has {cols}", self.dim())));
        }
        y.check_finite("BN input")?;
        let total = weights.map_or(rows as f64, |w| w.iter().sum());
        let mut stats = None;
        let mut out = DenseTensor::zeros(rows, cols);
        let mut xhat = DenseTensor::zeros(rows, cols);
        let inv_std = match mode {
            Mode::Train => {
                if total < 2.0 {
                    return Err(LdcError::Shape(format!(
                        "train-mode batch normalization needs at least 2 samples, got {total}"
                    )));
                }
                let mut mean = vec![0.0; cols];
                for r in 0..rows {
                    let wr = weights.map_or(1.0, |w| w[r]);
                    for (m, v) in mean.iter_mut().zip(y.row(r)) {
                        *m += wr * v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= total);
                let mut var = vec![0.0; cols];
                for r in 0..rows {
                    let wr = weights.map_or(1.0, |w| w[r]);
                    for ((s, v), m) in var.iter_mut().zip(y.row(r)).zip(&mean) {
                        *s += wr * (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= total);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
                for r in 0..rows {
                    for d in 0..cols {
                        let xh = (y.get(r, d) - mean[d]) * inv_std[d];
                        xhat.set(r, d, xh);
                        out.set(r, d, xh * self.w[d] + self.b[d]);
                    }
                }
                stats = Some(BatchStats {
                    mean,
                    var,
                    count: total,
                });
                inv_std
            }
            Mode::Eval => {
                let inv_std: Vec<f64> = self
                    .running_var
                    .iter()
                    .map(|v| 1.0 / (v + self.eps).sqrt())
                    .collect();
                for r in 0..rows {
                    for d in 0..cols {
                        let x = y.get(r, d);
                        xhat.set(r, d, (x - self.running_mean[d]) * inv_std[d]);
                        out.set(r, d, self.eval_one(d, x));
                    }
                }
                inv_std
            }
        };
        out.check_finite("BN output")?;
        Ok((
            out,
            BnCache {
                mode,
                xhat,
                inv_std,
                weights: weights.map(<[f64]>::to_vec),
                total,
            },
            stats,
        ))
    }

    /// Exact gradients. For weighted caches `upstream` row `r` is the sum of the
    /// upstream gradients of that row's copies, and so is the returned `dx` row.
    pub fn backward(&self, cache: &BnCache, upstream: &DenseTensor) -> Result<NormGrads> {
        let (rows, cols) = cache.xhat.shape();
        if upstream.shape() != (rows, cols) {
            return Err(LdcError::Shape(format!(
                "BN backward: upstream {:?}, cache {:?}",
                upstream.shape(),
                (rows, cols)
            )));
        }
        let mut dw = vec![0.0; cols];
        let mut db = vec![0.0; cols];
        for r in 0..rows {
            for d in 0..cols {
                let g = upstream.get(r, d);
                db[d] += g;
                dw[d] += g * cache.xhat.get(r, d);
            }
        }
        let mut dx = DenseTensor::zeros(rows, cols);
        match cache.mode {
            Mode::Train => {
                let n = cache.total;
                for r in 0..rows {
                    let wr = cache.weights.as_ref().map_or(1.0, |w| w[r]);
                    for d in 0..cols {
                        let g = upstream.get(r, d);
                        let v = self.w[d] * cache.inv_std[d] * (g - wr * (db[d] + cache.xhat.get(r, d) * dw[d]) / n);
                        dx.set(r, d, v);
                    }
                }
            }
            Mode::Eval => {
                for r in 0..rows {
                    for d in 0..cols {
                        dx.set(r, d, upstream.get(r, d) * self.w[d] * cache.inv_std[d]);
                    }
                }
            }
        }
        Ok(NormGrads { dx, dw, db })
    }
}

/// Per-sample normalization across dimensions with per-dimension affine parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: DenseTensor,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            w: vec![1.0; dim],
            b: vec![0.0; dim],
            eps: BN_EPS,
        }
    }

    pub fn forward(&self, y: &DenseTensor) -> Result<(DenseTensor, LayerNormCache)> {
        let (rows, cols) = y.shape();
        if cols != self.w.len() {
            return Err(LdcError::Shape(format!("LayerNorm over {} dims, input has {cols}", self.w.len())));
        }
        let mut out = DenseTensor::zeros(rows, cols);
        let mut xhat = DenseTensor::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = y.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + self.eps).sqrt();
            for d in 0..cols {
                let xh = (row[d] - mean) * inv;
                xhat.set(r, d, xh);
                out.set(r, d, xh * self.w[d] + self.b[d]);
            }
            inv_std.push(inv);
        }
        out.check_finite("LayerNorm output")?;
        Ok((out, LayerNormCache { xhat, inv_std }))
    }

    pub fn backward(&self, cache: &LayerNormCache, upstream: &DenseTensor) -> Result<NormGrads> {
        let (rows, cols) = cache.xhat.shape();
        if upstream.shape() != (rows, cols) {
            return Err(LdcError::Shape("LayerNorm backward shape".into()));
        }
        let mut dx = DenseTensor::zeros(rows, cols);
        let mut dw = vec![0.0; cols];
        let mut db = vec![0.0; cols];
        let n = cols as f64;
        for r in 0..rows {
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for d in 0..cols {
                let g = upstream.get(r, d);
                let xh = cache.xhat.get(r, d);
                db[d] += g;
                dw[d] += g * xh;
                let gh = g * self.w[d];
                sum_g += gh;
                sum_gx += gh * xh;
            }
            for d in 0..cols {
                let gh = upstream.get(r, d) * self.w[d];
                let xh = cache.xhat.get(r, d);
                dx.set(r, d, cache.inv_std[r] * (gh - sum_g / n - xh * sum_gx / n));
            }
        }
        Ok(NormGrads { dx, dw, db })
    }
}

/// Root-mean-square normalization: `x / sqrt(mean(x^2) + eps) * w`, no bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsNorm {
    pub w: Vec<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct RmsNormCache {
    x: DenseTensor,
    inv_rms: Vec<f64>,
}

impl RmsNorm {
    pub fn new(dim: usize) -> Self {
        RmsNorm {
            w: vec![1.0; dim],
            eps: BN_EPS,
        }
    }

    pub fn forward(&self, y: &DenseTensor) -> Result<(DenseTensor, RmsNormCache)> {
        let (rows, cols) = y.shape();
        if cols != self.w.len() {
            return Err(LdcError::Shape(format!("RMSNorm over {} dims, input has {cols}", self.w.len())));
        }
        let mut out = DenseTensor::zeros(rows, cols);
        let mut inv_rms = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = y.row(r);
            let ms = row.iter().map(|v| v * v).sum::<f64>() / cols as f64;
            let inv = 1.0 / (ms + self.eps).sqrt();
            for d in 0..cols {
                out.set(r, d, row[d] * inv * self.w[d]);
            }
            inv_rms.push(inv);
        }
        out.check_finite("RMSNorm output")?;
        Ok((out, RmsNormCache { x: y.clone(), inv_rms }))
    }

    pub fn backward(&self, cache: &RmsNormCache, upstream: &DenseTensor) -> Result<NormGrads> {
        let (rows, cols) = cache.x.shape();
        if upstream.shape() != (rows, cols) {
            return Err(LdcError::Shape("RMSNorm backward shape".into()));
        }
        let mut dx = DenseTensor::zeros(rows, cols);
        let mut dw = vec![0.0; cols];
        let n = cols as f64;
        for r in 0..rows {
            let inv = cache.inv_rms[r];
            let x = cache.x.row(r);
            let mut dot = 0.0;
            for d in 0..cols {
                let g = upstream.get(r, d);
                dw[d] += g * x[d] * inv;
                dot += g * self.w[d] * x[d];
            }
            for d in 0..cols {
                let gh = upstream.get(r, d) * self.w[d];
                dx.set(r, d, gh * inv - x[d] * dot * inv * inv * inv / n);
            }
        }
        Ok(NormGrads {
            dx,
            dw,
            db: vec![0.0; cols],
        })
    }
}
