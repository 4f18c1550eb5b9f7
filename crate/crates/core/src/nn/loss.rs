//! Classification losses over a single logit vector. Every loss returns the
//! value and its gradient with respect to the student logits.

use crate::error::{LdcError, Result};

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Cross-entropy against a probability target: `-sum t log softmax(z)`, `dz = softmax(z) - t`.
pub fn softmax_ce(z: &[f64], t: &[f64]) -> (f64, Vec<f64>) {
    let ls = log_softmax(z);
    let loss = -t.iter().zip(&ls).filter(|(t, _)| **t != 0.0).map(|(t, l)| t * l).sum::<f64>();
    let dz = ls.iter().zip(t).map(|(l, t)| l.exp() - t).collect();
    (loss, dz)
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(LdcError::Config(format!("temperature must be positive, got {t}")))
    }
}

fn scaled(z: &[f64], t: f64) -> Vec<f64> {
    z.iter().map(|v| v / t).collect()
}

/// `T^2 * KL(softmax(z_t/T) || softmax(z/T))` with `dz = T * (softmax(z/T) - softmax(z_t/T))`.
pub fn kd_kl_loss(z: &[f64], z_teacher: &[f64], temperature: f64) -> Result<(f64, Vec<f64>)> {
    check_temperature(temperature)?;
    if z.len() != z_teacher.len() {
        return Err(LdcError::Shape(format!("{} student vs {} teacher logits", z.len(), z_teacher.len())));
    }
    let lq = log_softmax(&scaled(z, temperature));
    let lp = log_softmax(&scaled(z_teacher, temperature));
    let mut kl = 0.0;
    let mut dz = Vec::with_capacity(z.len());
    for (lp, lq) in lp.iter().zip(&lq) {
        let p = lp.exp();
        if p > 0.0 {
            kl += p * (lp - lq);
        }
        dz.push(temperature * (lq.exp() - p));
    }
    Ok((temperature * temperature * kl.max(0.0), dz))
}

/// Jensen-Shannon divergence between the softened teacher and student, scaled by `T^2`.
pub fn js_loss(z: &[f64], z_teacher: &[f64], temperature: f64) -> Result<(f64, Vec<f64>)> {
    check_temperature(temperature)?;
    if z.len() != z_teacher.len() {
        return Err(LdcError::Shape(format!("{} student vs {} teacher logits", z.len(), z_teacher.len())));
    }
    let q = softmax(&scaled(z, temperature));
    let p = softmax(&scaled(z_teacher, temperature));
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    let kl = |a: &[f64]| -> f64 {
        a.iter()
            .zip(&m)
            .filter(|(a, _)| **a > 0.0)
            .map(|(a, m)| a * (a / m).ln())
            .sum()
    };
    let loss = temperature * temperature * 0.5 * (kl(&p) + kl(&q));
    // dL/dq_j = T^2/2 * log(q_j/m_j); chain through softmax(z/T)
    let g: Vec<f64> = q
        .iter()
        .zip(&m)
        .map(|(q, m)| if *q > 0.0 { 0.5 * (q / m).ln() } else { 0.0 })
        .collect();
    let qg: f64 = q.iter().zip(&g).map(|(a, b)| a * b).sum();
    let dz = q.iter().zip(&g).map(|(q, g)| temperature * q * (g - qg)).collect();
    Ok((loss.max(0.0), dz))
}

/// `f * t + (1 - f) / K`.
pub fn label_smooth(t: &[f64], f: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&f) {
        return Err(LdcError::Config(format!("label smoothing factor {f} outside [0, 1]")));
    }
    let k = t.len() as f64;
    Ok(t.iter().map(|v| f * v + (1.0 - f) / k).collect())
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    let h = -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>();
    h.max(0.0)
}
