use serde::{Deserialize, Serialize};

use crate::error::{LdcError, Result};
use crate::model::sgn;
use crate::nn::BnLayer;

/// Per-dimension integer rule replacing `sgn(BN(alpha_d * y_d))`.
///
/// For `flip[d] == false` the bit is `+1` iff `y_d >= theta[d]`; for
/// `flip[d] == true` it is `+1` iff `y_d <= theta[d]`. A `Some(s)` in
/// `const_dim` overrides both with the constant `s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta: Vec<i32>,
    pub flip: Vec<bool>,
    pub const_dim: Vec<Option<i8>>,
}

impl Thresholds {
    /// Plain sign of the accumulation: `+1` iff `y >= 0`.
    pub fn plain(d: usize) -> Self {
        Thresholds {
            theta: vec![0; d],
            flip: vec![false; d],
            const_dim: vec![None; d],
        }
    }

    #[inline]
    pub fn bit(&self, d: usize, y: i32) -> bool {
        match self.const_dim[d] {
            Some(s) => s > 0,
            None if self.flip[d] => y <= self.theta[d],
            None => y >= self.theta[d],
        }
    }
}

/// Folds eval-mode batch normalization into integer thresholds for an accumulation
/// over `n` binary products. The result agrees with `sgn(bn.eval_one(d, alpha[d] * y))`
/// for every integer `y` in `[-n, n]`.
pub fn fold_bn(bn: &BnLayer, alpha: &[f64], n: usize) -> Result<Thresholds> {
    let dim = bn.dim();
    if alpha.len() != dim {
        return Err(LdcError::Shape(format!("{} scaling factors for {dim} dimensions", alpha.len())));
    }
    let n = n as i64;
    let (lo, hi) = (-n - 1, n + 1);
    let mut out = Thresholds::plain(dim);
    for d in 0..dim {
        let a = alpha[d];
        if !(a > 0.0 && a.is_finite()) {
            return Err(LdcError::Fold(format!("scaling factor {a} in dimension {d}")));
        }
        let w = bn.w[d];
        if w == 0.0 {
            out.const_dim[d] = Some(sgn(bn.b[d]));
            continue;
        }
        let positive = |y: i64| bn.eval_one(d, a * y as f64) >= 0.0;
        let raw = (bn.running_mean[d] - (bn.running_var[d] + bn.eps).sqrt() * bn.b[d] / w) / a;
        let clamp = |t: f64| if t.is_nan() { 0 } else { t.clamp(lo as f64, hi as f64) as i64 };
        // The closed form can be off by one through rounding; settle it against
        // the exact floating-point expression, which is monotone in y.
        let theta = if w > 0.0 {
            let mut t = clamp(raw.ceil());
            while t > lo && positive(t - 1) {
                t -= 1;
            }
            while t <= n && !positive(t) {
                t += 1;
            }
            t
        } else {
            out.flip[d] = true;
            let mut t = clamp(raw.floor());
            while t < hi && positive(t + 1) {
                t += 1;
            }
            while t >= -n && !positive(t) {
                t -= 1;
            }
            t
        };
        out.theta[d] = theta as i32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bn1(w: f64, b: f64, mean: f64, var: f64) -> BnLayer {
        let mut bn = BnLayer::new(1);
        bn.w = vec![w];
        bn.b = vec![b];
        bn.running_mean = vec![mean];
        bn.running_var = vec![var];
        bn
    }

    #[test]
    fn centered_positive_scale_is_plain_sign() {
        let t = fold_bn(&bn1(2.0, 0.0, 0.0, 1.0), &[1.0], 10).unwrap();
        assert_eq!(t.theta, vec![0]);
        assert!(!t.flip[0]);
        for y in -10..=10 {
            assert_eq!(t.bit(0, y), y >= 0);
        }
    }

    #[test]
    fn negative_scale_flips() {
        let bn = bn1(-0.7, 0.3, 1.5, 4.0);
        let t = fold_bn(&bn, &[0.25], 29).unwrap();
        assert!(t.flip[0]);
        for y in -29..=29 {
            assert_eq!(t.bit(0, y), bn.eval_one(0, 0.25 * y as f64) >= 0.0, "y={y}");
        }
    }

    #[test]
    fn zero_scale_is_constant() {
        let t = fold_bn(&bn1(0.0, -0.2, 3.0, 1.0), &[1.0], 5).unwrap();
        assert_eq!(t.const_dim[0], Some(-1));
        assert!((-5..=5).all(|y| !t.bit(0, y)));
        let t = fold_bn(&bn1(0.0, 0.0, 3.0, 1.0), &[1.0], 5).unwrap();
        assert_eq!(t.const_dim[0], Some(1));
    }

    #[test]
    fn degenerate_alpha_is_an_error() {
        assert!(matches!(fold_bn(&bn1(1.0, 0.0, 0.0, 1.0), &[0.0], 5), Err(LdcError::Fold(_))));
    }

    #[test]
    fn threshold_stays_in_range() {
        let t = fold_bn(&bn1(1e-3, 50.0, 0.0, 1.0), &[1.0], 7).unwrap();
        assert_eq!(t.theta[0], -8);
        let t = fold_bn(&bn1(1e-3, -50.0, 0.0, 1.0), &[1.0], 7).unwrap();
        assert_eq!(t.theta[0], 8);
    }
}
