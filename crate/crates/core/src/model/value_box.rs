//! The value network: a scalar feature level goes through
//! `Linear(1, 20) -> BN(20) -> tanh -> Linear(20, D_v) -> sgn`.
//!
//! During training the network is evaluated once per distinct level and the
//! batch normalization weights each level by its number of occurrences in the
//! batch, which is the same as running it on every feature of every sample.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::latent::sgn;
use crate::error::{LdcError, Result};
use crate::nn::linear::{linear_backward, linear_forward, Linear, LinearCache};
use crate::nn::norm::{BatchStats, BnCache, BnLayer, Mode};
use crate::nn::tensor::DenseTensor;

pub const HIDDEN: usize = 20;
/// Active range of the straight-through estimator at the value network output.
pub const VALUE_STE_RANGE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueBox {
    pub layer1: Linear,
    pub bn: BnLayer,
    pub layer2: Linear,
    d_v: usize,
    levels: usize,
}

#[derive(Debug, Clone)]
pub struct ValueBoxCache {
    l1: LinearCache,
    bn: BnCache,
    act: DenseTensor,
    l2: LinearCache,
    /// Pre-sign outputs, one row per level.
    pub h2: DenseTensor,
    pub stats: Option<BatchStats>,
}

#[derive(Debug, Clone)]
pub struct ValueBoxGrads {
    pub w1: DenseTensor,
    pub b1: Vec<f64>,
    pub bn_w: Vec<f64>,
    pub bn_b: Vec<f64>,
    pub w2: DenseTensor,
    pub b2: Vec<f64>,
}

impl ValueBox {
    pub fn init<R: Rng>(d_v: usize, levels: usize, rng: &mut R) -> Self {
        ValueBox {
            layer1: Linear::init_uniform(1, HIDDEN, rng),
            bn: BnLayer::new(HIDDEN),
            layer2: Linear::init_uniform(HIDDEN, d_v, rng),
            d_v,
            levels,
        }
    }

    pub fn d_v(&self) -> usize {
        self.d_v
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    fn scaled_level(&self, level: usize) -> f64 {
        level as f64 / (self.levels - 1) as f64
    }

    /// Runs all levels at once. In train mode `counts[l]` is the number of times
    /// level `l` occurs in the batch and drives the normalization statistics.
    /// Returns the `levels x D_v` sign table.
    pub fn forward_levels(&self, counts: Option<&[f64]>, mode: Mode) -> Result<(Vec<i8>, ValueBoxCache)> {
        let input = DenseTensor::from_vec(
            self.levels,
            1,
            (0..self.levels).map(|l| self.scaled_level(l)).collect(),
        )?;
        let (h1, l1) = self.layer1.forward(&input)?;
        let (n1, bn, stats) = match (mode, counts) {
            (Mode::Train, Some(c)) => self.bn.forward_stateless(&h1, Some(c), Mode::Train)?,
            (Mode::Train, None) => {
                return Err(LdcError::Config("train-mode value network needs level counts".into()))
            }
            (Mode::Eval, _) => self.bn.forward_stateless(&h1, None, Mode::Eval)?,
        };
        let act = DenseTensor::from_vec(
            self.levels,
            HIDDEN,
            n1.as_slice().iter().map(|v| v.tanh()).collect(),
        )?;
        let (h2, l2) = linear_forward(&act, &self.layer2.weight, &self.layer2.bias)?;
        let bits = h2.as_slice().iter().map(|v| sgn(*v)).collect();
        Ok((
            bits,
            ValueBoxCache {
                l1,
                bn,
                act,
                l2,
                h2,
                stats,
            },
        ))
    }

    /// Eval-mode pre-sign output for one level, computed with plain loops in a fixed order.
    fn eval_level(&self, level: usize) -> Vec<f64> {
        let x = self.scaled_level(level);
        let hidden: Vec<f64> = (0..HIDDEN)
            .map(|j| {
                let h = x * self.layer1.weight.get(j, 0) + self.layer1.bias[j];
                self.bn.eval_one(j, h).tanh()
            })
            .collect();
        (0..self.d_v)
            .map(|o| {
                let mut acc = self.layer2.bias[o];
                for (j, a) in hidden.iter().enumerate() {
                    acc += a * self.layer2.weight.get(o, j);
                }
                acc
            })
            .collect()
    }

    /// Eval-mode value bits for a single level.
    pub fn valuebox_forward(&self, level: usize) -> Result<Vec<i8>> {
        if level >= self.levels {
            return Err(LdcError::Config(format!("level {level} outside [0, {}]", self.levels - 1)));
        }
        Ok(self.eval_level(level).into_iter().map(sgn).collect())
    }

    /// Eval-mode lookup table, `levels x D_v`, row-major.
    pub fn lut(&self) -> Vec<i8> {
        (0..self.levels).flat_map(|l| self.eval_level(l).into_iter().map(sgn)).collect()
    }

    /// Backward pass from gradients on the sign outputs, summed per level.
    pub fn backward(&self, cache: &ValueBoxCache, upstream: &DenseTensor) -> Result<ValueBoxGrads> {
        if upstream.shape() != cache.h2.shape() {
            return Err(LdcError::Shape(format!(
                "value network backward: upstream {:?}, outputs {:?}",
                upstream.shape(),
                cache.h2.shape()
            )));
        }
        let mut dh2 = upstream.clone();
        for (g, h) in dh2.as_mut_slice().iter_mut().zip(cache.h2.as_slice()) {
            if h.abs() > VALUE_STE_RANGE {
                *g = 0.0;
            }
        }
        let g2 = linear_backward(&cache.l2, &self.layer2.weight, &dh2)?;
        let mut dn1 = g2.dx;
        for (g, a) in dn1.as_mut_slice().iter_mut().zip(cache.act.as_slice()) {
            *g *= 1.0 - a * a;
        }
        let gbn = self.bn.backward(&cache.bn, &dn1)?;
        let g1 = linear_backward(&cache.l1, &self.layer1.weight, &gbn.dx)?;
        Ok(ValueBoxGrads {
            w1: g1.dw,
            b1: g1.db,
            bn_w: gbn.dw,
            bn_b: gbn.db,
            w2: g2.dw,
            b2: g2.db,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lut_matches_per_level_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut vb = ValueBox::init(8, 32, &mut rng);
        vb.bn.running_mean = (0..HIDDEN).map(|j| 0.05 * j as f64 - 0.3).collect();
        let lut = vb.lut();
        assert_eq!(lut.len(), 32 * 8);
        for l in 0..32 {
            assert_eq!(vb.valuebox_forward(l).unwrap(), lut[l * 8..(l + 1) * 8]);
        }
        assert!(lut.iter().all(|b| *b == 1 || *b == -1));
        assert!(vb.valuebox_forward(32).is_err());
    }

    #[test]
    fn eval_table_agrees_with_matrix_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let vb = ValueBox::init(4, 16, &mut rng);
        let (bits, cache) = vb.forward_levels(None, Mode::Eval).unwrap();
        for l in 0..16 {
            let reference = vb.eval_level(l);
            for o in 0..4 {
                assert!((cache.h2.get(l, o) - reference[o]).abs() < 1e-12);
            }
        }
        assert_eq!(bits.len(), 64);
    }
}
