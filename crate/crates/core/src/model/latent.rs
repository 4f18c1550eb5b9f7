use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LdcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Feature,
    Class,
}

/// Sign with `sgn(0) = +1`.
#[inline]
pub fn sgn(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

/// Real-valued latent weights behind a set of binary vectors, one vector per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    frozen: Vec<bool>,
    role: Role,
}

impl LatentMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, role: Role) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(LdcError::Shape(format!("{} latent values for {rows}x{cols}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LdcError::NonFinite("latent weights".into()));
        }
        Ok(LatentMatrix {
            rows,
            cols,
            values,
            frozen: vec![false; rows * cols],
            role,
        })
    }

    /// I.i.d. uniform entries on `[-scale, scale]`.
    pub fn init_uniform<R: Rng>(rows: usize, cols: usize, role: Role, scale: f64, rng: &mut R) -> Self {
        let values = (0..rows * cols).map(|_| rng.random_range(-scale..=scale)).collect();
        LatentMatrix::new(rows, cols, values, role).expect("sized")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the latent values. Callers must leave frozen entries alone;
    /// [`LatentMatrix::validate`] checks that they did.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    /// Pins entry `idx` to its current sign. Already-frozen entries are untouched.
    pub fn freeze(&mut self, idx: usize) {
        if !self.frozen[idx] {
            self.values[idx] = sgn(self.values[idx]) as f64;
            self.frozen[idx] = true;
        }
    }

    pub fn frozen_count(&self) -> usize {
        self.frozen.iter().filter(|f| **f).count()
    }

    pub fn frozen_fraction(&self) -> f64 {
        if self.frozen.is_empty() {
            0.0
        } else {
            self.frozen_count() as f64 / self.frozen.len() as f64
        }
    }

    pub fn signs(&self) -> Vec<i8> {
        self.values.iter().map(|v| sgn(*v)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(LdcError::NonFinite("latent weights".into()));
        }
        for (v, f) in self.values.iter().zip(&self.frozen) {
            if *f && v.abs() != 1.0 {
                return Err(LdcError::Config(format!("frozen latent entry holds {v}")));
            }
        }
        Ok(())
    }
}

/// Signs of the feature latents and the per-column mean magnitude over non-frozen rows
/// (1 for a fully frozen column).
pub fn binarize_feature(f: &LatentMatrix) -> (Vec<i8>, Vec<f64>) {
    debug_assert_eq!(f.role, Role::Feature);
    let mut sum = vec![0.0; f.cols];
    let mut count = vec![0usize; f.cols];
    for r in 0..f.rows {
        for c in 0..f.cols {
            let idx = r * f.cols + c;
            if !f.frozen[idx] {
                sum[c] += f.values[idx].abs();
                count[c] += 1;
            }
        }
    }
    let alpha = sum
        .iter()
        .zip(&count)
        .map(|(s, &n)| if n == 0 { 1.0 } else { s / n as f64 })
        .collect();
    (f.signs(), alpha)
}

/// Signs of the class latents and one scaling factor: the mean magnitude over
/// all non-frozen entries.
pub fn binarize_class(c: &LatentMatrix) -> (Vec<i8>, f64) {
    debug_assert_eq!(c.role, Role::Class);
    let (sum, n) = c
        .values
        .iter()
        .zip(&c.frozen)
        .filter(|(_, f)| !**f)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v.abs(), n + 1));
    let alpha = if n == 0 { 1.0 } else { sum / n as f64 };
    (c.signs(), alpha)
}

/// Straight-through gradient of `sgn`: pass `upstream` where `|x| <= delta`, zero elsewhere.
pub fn ste_backward(x: &[f64], upstream: &[f64], delta: f64) -> Vec<f64> {
    x.iter()
        .zip(upstream)
        .map(|(x, g)| if x.abs() <= delta { *g } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_column_alpha() {
        let f = LatentMatrix::new(3, 1, vec![0.2, -0.4, 0.6], Role::Feature).unwrap();
        let (bits, alpha) = binarize_feature(&f);
        assert_eq!(bits, vec![1, -1, 1]);
        assert!((alpha[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_latent_binarizes_to_plus_one() {
        let f = LatentMatrix::new(1, 2, vec![0.0, -0.0], Role::Feature).unwrap();
        assert_eq!(binarize_feature(&f).0, vec![1, 1]);
    }

    #[test]
    fn fully_frozen_column_has_unit_alpha() {
        let mut f = LatentMatrix::new(2, 2, vec![0.3, -0.1, -0.2, 0.5], Role::Feature).unwrap();
        f.freeze(0);
        f.freeze(2);
        let (bits, alpha) = binarize_feature(&f);
        assert_eq!(alpha[0], 1.0);
        assert!((alpha[1] - 0.3).abs() < 1e-15);
        assert_eq!(bits, vec![1, -1, -1, 1]);
        assert_eq!(f.values()[0], 1.0);
        assert_eq!(f.values()[2], -1.0);
    }

    #[test]
    fn class_alpha_examples() {
        let c = LatentMatrix::new(2, 2, vec![0.5; 4], Role::Class).unwrap();
        assert_eq!(binarize_class(&c), (vec![1; 4], 0.5));
        let c = LatentMatrix::new(2, 2, vec![0.1, -0.3, 0.2, -0.6], Role::Class).unwrap();
        assert!((binarize_class(&c).1 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn class_alpha_skips_frozen_entries() {
        let mut c = LatentMatrix::new(2, 3, vec![0.1, -0.3, 0.2, -0.6, 0.9, -0.05], Role::Class).unwrap();
        c.freeze(1);
        c.freeze(4);
        let active: Vec<f64> = [0usize, 2, 3, 5].iter().map(|&i| c.values()[i].abs()).collect();
        let expect = active.iter().sum::<f64>() / active.len() as f64;
        assert!((binarize_class(&c).1 - expect).abs() < 1e-15);
    }

    #[test]
    fn freezing_is_idempotent() {
        let mut c = LatentMatrix::new(1, 1, vec![-0.7], Role::Class).unwrap();
        c.freeze(0);
        c.freeze(0);
        assert_eq!(c.values(), &[-1.0]);
        assert_eq!(c.frozen_count(), 1);
        c.validate().unwrap();
    }

    #[test]
    fn ste_examples() {
        assert_eq!(ste_backward(&[2.0], &[0.3], 1.0), vec![0.0]);
        assert_eq!(ste_backward(&[0.5], &[0.7], 1.0), vec![0.7]);
        assert_eq!(ste_backward(&[1.1], &[0.7], 1.2), vec![0.7]);
        assert_eq!(ste_backward(&[-1.0], &[0.7], 1.0), vec![0.7]);
    }
}
