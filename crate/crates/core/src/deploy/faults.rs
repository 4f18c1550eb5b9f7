use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bits::BitMatrix;
use super::packed::{infer_packed, PackedModel};
use crate::dataio::Dataset;
use crate::error::{LdcError, Result};

fn corrupt(m: &BitMatrix, p: f64, rng: &mut ChaCha8Rng) -> BitMatrix {
    let mut out = m.clone();
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if rng.random::<f64>() < p {
                out.toggle(r, c);
            }
        }
    }
    out
}

/// Flips every stored vector bit (value table, feature and class bits)
/// independently with probability `p`. Thresholds and flags are left intact.
pub fn inject_bit_errors(pm: &PackedModel, p: f64, seed: u64) -> Result<PackedModel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(LdcError::Config(format!("bit error rate {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lut = corrupt(pm.lut(), p, &mut rng);
    let fbits = corrupt(pm.fbits(), p, &mut rng);
    let cbits = corrupt(pm.cbits(), p, &mut rng);
    pm.with_bits(lut, fbits, cbits)
}

pub fn packed_accuracy(pm: &PackedModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for i in 0..data.len() {
        if infer_packed(pm, data.row(i))?.0 == data.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub rate: f64,
    pub mean_accuracy: f64,
    pub accuracies: Vec<f64>,
}

/// Accuracy under bit errors for each rate, over seeds `seed0..seed0 + seeds`.
pub fn robustness_curve(pm: &PackedModel, data: &Dataset, rates: &[f64], seeds: u64, seed0: u64) -> Result<Vec<RobustnessPoint>> {
    rates
        .iter()
        .map(|&rate| {
            let accuracies = (0..seeds)
                .map(|s| packed_accuracy(&inject_bit_errors(pm, rate, seed0 + s)?, data))
                .collect::<Result<Vec<f64>>>()?;
            let mean_accuracy = accuracies.iter().sum::<f64>() / accuracies.len().max(1) as f64;
            Ok(RobustnessPoint {
                rate,
                mean_accuracy,
                accuracies,
            })
        })
        .collect()
}
