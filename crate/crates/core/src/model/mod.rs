//! The trainable binary classifier.
//!
//! Forward pass for a sample with levels `x_1..x_N`:
//!
//! ```text
//! y_d = alpha_d * sum_i F_{i,d} * V(x_i)_d        (F, V in {-1, +1})
//! s_d = sgn(norm(y)_d)
//! z_k = alpha_C * sum_d C_{k,d} * s_d
//! ```
//!
//! `F` and `C` are the signs of real-valued latent matrices, `alpha_d` is the
//! mean latent magnitude of column `d` of `F` and `alpha_C` that of all of `C`.
//! `V(x)` is the value network output for level `x`, duplicated `D / D_v` times
//! so that `V(x)_d = v(x)_{d mod D_v}`.
//!
//! The backward pass uses identity straight-through estimators for the weight
//! signs, a clipped one (`|u| <= delta`) for the encoding sign, treats both
//! scaling factors as constants, and reports the class gradient as
//! `sum_b dz_k * s_d` without the `alpha_C` factor.

pub mod latent;
pub mod normalizer;
pub mod value_box;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use latent::{binarize_class, binarize_feature, sgn, ste_backward, LatentMatrix, Role};
pub use normalizer::{NormCache, NormKind, Normalizer};
pub use value_box::{ValueBox, ValueBoxCache, ValueBoxGrads, HIDDEN};

use crate::error::{LdcError, Result};
use crate::nn::norm::{BatchStats, Mode};
use crate::nn::tensor::DenseTensor;

pub const LATENT_INIT_SCALE: f64 = 0.2;

/// Model dimensions: features `n`, hypervector width `d`, value vector width
/// `d_v`, feature levels `m`, classes `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub d: usize,
    pub d_v: usize,
    pub m: usize,
    pub k: usize,
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.d_v == 0 || self.k == 0 {
            return Err(LdcError::Config(format!("all dimensions must be positive: {self:?}")));
        }
        if self.m < 2 {
            return Err(LdcError::Config(format!("need at least 2 feature levels, got {}", self.m)));
        }
        if !self.d.is_multiple_of(self.d_v) {
            return Err(LdcError::Config(format!("D={} is not a multiple of D_v={}", self.d, self.d_v)));
        }
        if self.n > i32::MAX as usize / 2 {
            return Err(LdcError::Config(format!("too many features: {}", self.n)));
        }
        Ok(())
    }
}

/// Expands a `m x d_v` value table to `m x d` by repeating each row `d / d_v` times.
pub fn expand_lut(lut: &[i8], m: usize, d_v: usize, d: usize) -> Vec<i8> {
    let mut out = Vec::with_capacity(m * d);
    for l in 0..m {
        let row = &lut[l * d_v..(l + 1) * d_v];
        out.extend((0..d).map(|j| row[j % d_v]));
    }
    out
}

/// Integer accumulation `sum_i F_{i,:} * V(x_i)` for one sample, written into `out` (length D).
pub fn accumulate(sample: &[u16], fbits: &[i8], vexp: &[i8], d: usize, out: &mut [i32]) {
    out.fill(0);
    if sample.len() <= i16::MAX as usize {
        let mut acc = vec![0i16; d];
        for (i, &lvl) in sample.iter().enumerate() {
            let f = &fbits[i * d..(i + 1) * d];
            let v = &vexp[lvl as usize * d..(lvl as usize + 1) * d];
            for ((a, &fb), &vb) in acc.iter_mut().zip(f).zip(v) {
                *a = a.wrapping_add((fb * vb) as i16);
            }
        }
        for (o, a) in out.iter_mut().zip(&acc) {
            *o = *a as i32;
        }
    } else {
        for (i, &lvl) in sample.iter().enumerate() {
            let f = &fbits[i * d..(i + 1) * d];
            let v = &vexp[lvl as usize * d..(lvl as usize + 1) * d];
            for ((a, &fb), &vb) in out.iter_mut().zip(f).zip(v) {
                *a += (fb * vb) as i32;
            }
        }
    }
}

/// `z_k = alpha * sum_d C_{k,d} s_d` for every class.
pub fn similarity(s: &[i8], cbits: &[i8], alpha: f64) -> Vec<f64> {
    let d = s.len();
    cbits
        .chunks_exact(d)
        .map(|c| alpha * c.iter().zip(s).map(|(a, b)| (a * b) as i32).sum::<i32>() as f64)
        .collect()
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub mode: Mode,
    pub batch: usize,
    levels: Vec<u16>,
    vexp: Vec<i8>,
    pub fbits: Vec<i8>,
    pub alpha_f: Vec<f64>,
    pub cbits: Vec<i8>,
    pub alpha_c: f64,
    /// Accumulation `y`, batch x D.
    pub y: DenseTensor,
    /// Normalized accumulation (the sign input), batch x D.
    pub u: DenseTensor,
    /// Sample bits, batch x D.
    pub s: Vec<i8>,
    norm: NormCache,
    norm_stats: Option<BatchStats>,
    value_box: ValueBoxCache,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    /// N x D, for the feature latents.
    pub features: Vec<f64>,
    /// K x D, for the class latents.
    pub classes: Vec<f64>,
    pub norm_w: Vec<f64>,
    pub norm_b: Vec<f64>,
    pub value_box: ValueBoxGrads,
    /// Gradient on the sample bits before the straight-through estimator, batch x D.
    pub ds: DenseTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdcModel {
    pub dims: Dims,
    pub features: LatentMatrix,
    pub classes: LatentMatrix,
    pub value_box: ValueBox,
    pub norm: Normalizer,
    /// Multiplies every feature column scaling factor.
    pub alpha_multiplier: f64,
}

impl LdcModel {
    pub fn new(dims: Dims, norm: NormKind, alpha_multiplier: f64, seed: u64) -> Result<Self> {
        dims.validate()?;
        if !(alpha_multiplier > 0.0 && alpha_multiplier.is_finite()) {
            return Err(LdcError::Config(format!("alpha multiplier must be positive, got {alpha_multiplier}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = LatentMatrix::init_uniform(dims.n, dims.d, Role::Feature, LATENT_INIT_SCALE, &mut rng);
        let classes = LatentMatrix::init_uniform(dims.k, dims.d, Role::Class, LATENT_INIT_SCALE, &mut rng);
        let value_box = ValueBox::init(dims.d_v, dims.m, &mut rng);
        Ok(LdcModel {
            dims,
            features,
            classes,
            value_box,
            norm: Normalizer::new(norm, dims.d),
            alpha_multiplier,
        })
    }

    /// Feature signs and per-column scaling factors as used in the forward pass.
    pub fn binarized_features(&self) -> (Vec<i8>, Vec<f64>) {
        let (bits, mut alpha) = binarize_feature(&self.features);
        alpha.iter_mut().for_each(|a| *a *= self.alpha_multiplier);
        (bits, alpha)
    }

    fn check_rows(&self, rows: &[&[u16]]) -> Result<()> {
        for row in rows {
            if row.len() != self.dims.n {
                return Err(LdcError::Shape(format!("sample has {} features, model expects {}", row.len(), self.dims.n)));
            }
            if let Some(bad) = row.iter().find(|&&l| l as usize >= self.dims.m) {
                return Err(LdcError::Config(format!("feature level {bad} outside [0, {}]", self.dims.m - 1)));
            }
        }
        Ok(())
    }

    /// Batch forward pass returning logits (batch x K). Train mode uses batch
    /// statistics; call [`LdcModel::commit_stats`] to fold them into the running averages.
    pub fn forward(&self, rows: &[&[u16]], mode: Mode) -> Result<(DenseTensor, ForwardCache)> {
        self.check_rows(rows)?;
        let Dims { n, d, d_v, m, k } = self.dims;
        let batch = rows.len();
        let mut levels = Vec::with_capacity(batch * n);
        for row in rows {
            levels.extend_from_slice(row);
        }

        let (lut, vb_cache) = match mode {
            Mode::Train => {
                let mut counts = vec![0.0; m];
                for &l in &levels {
                    counts[l as usize] += 1.0;
                }
                self.value_box.forward_levels(Some(&counts), Mode::Train)?
            }
            Mode::Eval => {
                let (_, cache) = self.value_box.forward_levels(None, Mode::Eval)?;
                (self.value_box.lut(), cache)
            }
        };
        let vexp = expand_lut(&lut, m, d_v, d);
        let (fbits, alpha_f) = self.binarized_features();
        let (cbits, alpha_c) = binarize_class(&self.classes);

        let mut y = DenseTensor::zeros(batch, d);
        let mut acc = vec![0i32; d];
        for (b, row) in rows.iter().enumerate() {
            accumulate(row, &fbits, &vexp, d, &mut acc);
            for ((out, a), al) in y.row_mut(b).iter_mut().zip(&acc).zip(&alpha_f) {
                *out = al * *a as f64;
            }
        }
        let (u, norm, norm_stats) = self.norm.forward(&y, mode)?;
        let s: Vec<i8> = u.as_slice().iter().map(|v| sgn(*v)).collect();
        let mut z = DenseTensor::zeros(batch, k);
        for b in 0..batch {
            let zb = similarity(&s[b * d..(b + 1) * d], &cbits, alpha_c);
            z.row_mut(b).copy_from_slice(&zb);
        }
        Ok((
            z,
            ForwardCache {
                mode,
                batch,
                levels,
                vexp,
                fbits,
                alpha_f,
                cbits,
                alpha_c,
                y,
                u,
                s,
                norm,
                norm_stats,
                value_box: vb_cache,
            },
        ))
    }

    /// Applies the batch statistics of a train-mode forward pass to the running averages.
    pub fn commit_stats(&mut self, cache: &ForwardCache) {
        if let Some(stats) = &cache.norm_stats {
            self.norm.commit(stats);
        }
        if let Some(stats) = &cache.value_box.stats {
            self.value_box.bn.commit(stats);
        }
    }

    /// Gradients of a loss with logit gradient `dz` (batch x K) with respect to all parameters.
    pub fn backward(&self, cache: &ForwardCache, dz: &DenseTensor, delta: f64) -> Result<Gradients> {
        let Dims { n, d, d_v, m, k } = self.dims;
        let batch = cache.batch;
        if dz.shape() != (batch, k) {
            return Err(LdcError::Shape(format!("logit gradient {:?} for batch {batch} x {k}", dz.shape())));
        }

        let mut classes = vec![0.0; k * d];
        let mut ds = DenseTensor::zeros(batch, d);
        for b in 0..batch {
            let sb = &cache.s[b * d..(b + 1) * d];
            let dsb = ds.row_mut(b);
            for kk in 0..k {
                let g = dz.get(b, kk);
                if g == 0.0 {
                    continue;
                }
                let crow = &cache.cbits[kk * d..(kk + 1) * d];
                let dc = &mut classes[kk * d..(kk + 1) * d];
                for j in 0..d {
                    dc[j] += g * sb[j] as f64;
                    dsb[j] += g * cache.alpha_c * crow[j] as f64;
                }
            }
        }

        let du = DenseTensor::from_vec(batch, d, ste_backward(cache.u.as_slice(), ds.as_slice(), delta))?;
        let ng = self.norm.backward(&cache.norm, &du)?;
        let mut dya = ng.dx;
        for b in 0..batch {
            for (g, a) in dya.row_mut(b).iter_mut().zip(&cache.alpha_f) {
                *g *= a;
            }
        }

        let mut features = vec![0.0; n * d];
        let mut per_level = vec![0.0; m * d];
        for b in 0..batch {
            let g = dya.row(b);
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            let lv = &cache.levels[b * n..(b + 1) * n];
            for (i, &l) in lv.iter().enumerate() {
                let l = l as usize;
                let v = &cache.vexp[l * d..(l + 1) * d];
                let f = &cache.fbits[i * d..(i + 1) * d];
                let df = &mut features[i * d..(i + 1) * d];
                for j in 0..d {
                    df[j] += v[j] as f64 * g[j];
                }
                let pl = &mut per_level[l * d..(l + 1) * d];
                for j in 0..d {
                    pl[j] += f[j] as f64 * g[j];
                }
            }
        }
        let mut dv = DenseTensor::zeros(m, d_v);
        for l in 0..m {
            let src = &per_level[l * d..(l + 1) * d];
            let dst = dv.row_mut(l);
            for (j, g) in src.iter().enumerate() {
                dst[j % d_v] += g;
            }
        }
        let value_box = self.value_box.backward(&cache.value_box, &dv)?;

        Ok(Gradients {
            features,
            classes,
            norm_w: ng.dw,
            norm_b: ng.db,
            value_box,
            ds,
        })
    }

    /// Eval-mode logits for a set of samples.
    pub fn logits(&self, rows: &[&[u16]]) -> Result<DenseTensor> {
        Ok(self.forward(rows, Mode::Eval)?.0)
    }

    /// Eval-mode labels, lowest class index on ties.
    pub fn predict(&self, rows: &[&[u16]]) -> Result<Vec<usize>> {
        let z = self.logits(rows)?;
        Ok((0..z.rows()).map(|b| argmax(z.row(b))).collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.features.validate()?;
        self.classes.validate()?;
        if self.features.rows() != self.dims.n
            || self.features.cols() != self.dims.d
            || self.classes.rows() != self.dims.k
            || self.classes.cols() != self.dims.d
            || self.value_box.d_v() != self.dims.d_v
            || self.value_box.levels() != self.dims.m
        {
            return Err(LdcError::Shape("model parameters disagree with its dimensions".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn dims(n: usize, d: usize, d_v: usize, m: usize, k: usize) -> Dims {
        Dims { n, d, d_v, m, k }
    }

    #[test]
    fn accumulate_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, d, m) = (3, 4, 5);
        let fbits: Vec<i8> = (0..n * d).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let vexp: Vec<i8> = (0..m * d).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let sample = [4u16, 0, 2];
        let mut out = vec![0; d];
        accumulate(&sample, &fbits, &vexp, d, &mut out);
        for j in 0..d {
            let mut expect = 0i32;
            for i in 0..n {
                expect += fbits[i * d + j] as i32 * vexp[sample[i] as usize * d + j] as i32;
            }
            assert_eq!(out[j], expect);
        }
    }

    #[test]
    fn saturated_encoding() {
        let d = 8;
        let mut out = vec![0; d];
        accumulate(&[0, 0, 0, 0, 0], &vec![1; 5 * d], &vec![1; d], d, &mut out);
        assert!(out.iter().all(|&v| v == 5));
    }

    #[test]
    fn similarity_examples() {
        let s = [1i8, -1, -1, 1, 1, 1, -1, 1];
        let anti: Vec<i8> = s.iter().map(|v| -v).collect();
        let mut c = s.to_vec();
        c.extend(&anti);
        assert_eq!(similarity(&s, &c, 1.0), vec![8.0, -8.0]);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn lut_expansion_repeats_rows() {
        let lut = [1i8, -1, -1, 1];
        assert_eq!(expand_lut(&lut, 2, 2, 6), vec![1, -1, 1, -1, 1, -1, -1, 1, -1, 1, -1, 1]);
    }

    #[test]
    fn d_must_be_a_multiple_of_d_v() {
        assert!(LdcModel::new(dims(4, 10, 4, 8, 2), NormKind::None, 1.0, 0).is_err());
        assert!(LdcModel::new(dims(4, 8, 4, 8, 2), NormKind::None, 1.0, 0).is_ok());
    }

    #[test]
    fn level_out_of_range_is_rejected() {
        let model = LdcModel::new(dims(2, 4, 2, 4, 2), NormKind::None, 1.0, 0).unwrap();
        assert!(model.forward(&[&[0, 4]], Mode::Eval).is_err());
        assert!(model.forward(&[&[0, 1, 2]], Mode::Eval).is_err());
    }

    #[test]
    fn zero_logit_gradient_gives_zero_gradients() {
        let model = LdcModel::new(dims(5, 8, 2, 6, 3), NormKind::Batch, 1.0, 3).unwrap();
        let rows: Vec<Vec<u16>> = vec![vec![0, 1, 2, 3, 4], vec![5, 4, 3, 2, 1], vec![1, 1, 1, 1, 1]];
        let refs: Vec<&[u16]> = rows.iter().map(|r| r.as_slice()).collect();
        let (_, cache) = model.forward(&refs, Mode::Train).unwrap();
        let g = model.backward(&cache, &DenseTensor::zeros(3, 3), 1.0).unwrap();
        assert!(g.features.iter().chain(&g.classes).all(|v| *v == 0.0));
        assert!(g.value_box.w1.as_slice().iter().all(|v| *v == 0.0));
    }
}
