mod common;

use common::surrogate_gradient_errors;
use ldc::model::{Dims, LdcModel, NormKind};
use ldc::nn::{DenseTensor, Mode};

fn toy() -> Dims {
    Dims { n: 2, d: 4, d_v: 2, m: 4, k: 2 }
}

#[test]
fn toy_surrogate_gradients_without_normalizer() {
    for seed in 0..4 {
        for (name, err) in surrogate_gradient_errors(toy(), NormKind::None, 1.0, 6, 1.0, seed) {
            assert!(err <= 1e-4, "seed {seed} {name}: {err}");
        }
    }
}

#[test]
fn toy_surrogate_gradients_with_batch_norm() {
    for seed in 0..4 {
        for (name, err) in surrogate_gradient_errors(toy(), NormKind::Batch, 1.0, 6, 1.0, seed) {
            assert!(err <= 1e-4, "seed {seed} {name}: {err}");
        }
    }
}

#[test]
fn larger_surrogate_with_tricks() {
    let dims = Dims { n: 5, d: 8, d_v: 2, m: 6, k: 3 };
    for (name, err) in surrogate_gradient_errors(dims, NormKind::Batch, 0.5, 5, 1.2, 9) {
        assert!(err <= 1e-4, "{name}: {err}");
    }
    for (name, err) in surrogate_gradient_errors(dims, NormKind::None, 0.5, 5, 1.2, 9) {
        assert!(err <= 1e-4, "{name}: {err}");
    }
}

fn random_rows(n: usize, m: u16, batch: usize) -> Vec<Vec<u16>> {
    (0..batch).map(|b| (0..n).map(|i| ((b * 7 + i * 3) as u16) % m).collect()).collect()
}

#[test]
fn encoding_bits_and_logit_range() {
    let dims = Dims { n: 30, d: 16, d_v: 4, m: 8, k: 5 };
    for norm in [NormKind::None, NormKind::Batch, NormKind::Layer, NormKind::Rms] {
        let model = LdcModel::new(dims, norm, 1.0, 5).unwrap();
        let rows = random_rows(30, 8, 10);
        let refs: Vec<&[u16]> = rows.iter().map(|r| r.as_slice()).collect();
        for mode in [Mode::Train, Mode::Eval] {
            let (z, cache) = model.forward(&refs, mode).unwrap();
            assert!(cache.s.iter().all(|b| *b == 1 || *b == -1));
            let bound = cache.alpha_c * dims.d as f64 + 1e-12;
            assert!(z.as_slice().iter().all(|v| v.abs() <= bound));
        }
    }
}

#[test]
fn confident_correct_prediction_gives_zero_class_gradient() {
    let dims = Dims { n: 6, d: 8, d_v: 2, m: 4, k: 3 };
    let model = LdcModel::new(dims, NormKind::Batch, 1.0, 2).unwrap();
    let rows = random_rows(6, 4, 4);
    let refs: Vec<&[u16]> = rows.iter().map(|r| r.as_slice()).collect();
    let (z, cache) = model.forward(&refs, Mode::Train).unwrap();
    // softmax one-hot at the target: dz = sigma(z) - t = 0
    let dz = DenseTensor::zeros(z.rows(), z.cols());
    let g = model.backward(&cache, &dz, 1.0).unwrap();
    assert!(g.classes.iter().all(|v| *v == 0.0));
}

// Without a normalizer and with unit scaling, each nonzero dF entry of a
// single-sample batch is +-ds_d, and exactly the dims with |y_d| <= delta get gradient.
#[test]
fn feature_gradient_structure_without_normalizer() {
    let dims = Dims { n: 7, d: 12, d_v: 3, m: 5, k: 4 };
    let mut model = LdcModel::new(dims, NormKind::None, 1.0, 8).unwrap();
    for v in model.features.values_mut() {
        *v = if *v >= 0.0 { 1.0 } else { -1.0 };
    }
    for delta in [1.0, 3.0, 5.0] {
        let row: Vec<u16> = vec![0, 1, 2, 3, 4, 0, 1];
        let (_, cache) = model.forward(&[&row], Mode::Eval).unwrap();
        let dz = DenseTensor::from_vec(1, 4, vec![0.3, -0.1, -0.15, -0.05]).unwrap();
        let g = model.backward(&cache, &dz, delta).unwrap();
        let mut active = 0;
        for j in 0..dims.d {
            let inside = cache.y.get(0, j).abs() <= delta;
            let ds = g.ds.get(0, j);
            if inside && ds != 0.0 {
                active += 1;
            }
            for i in 0..dims.n {
                let v = g.features[i * dims.d + j];
                if inside {
                    assert!((v.abs() - ds.abs()).abs() < 1e-15);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
        let zeros = g.features.iter().filter(|v| **v == 0.0).count();
        assert_eq!(zeros, (dims.d - active) * dims.n);
    }
}

#[test]
fn saturated_batch_norm_blocks_feature_gradient() {
    let dims = Dims { n: 6, d: 8, d_v: 2, m: 4, k: 3 };
    let mut model = LdcModel::new(dims, NormKind::Batch, 1.0, 2).unwrap();
    if let ldc::model::Normalizer::Batch(bn) = &mut model.norm {
        bn.b = vec![5.0; 8];
    }
    let rows = random_rows(6, 4, 4);
    let refs: Vec<&[u16]> = rows.iter().map(|r| r.as_slice()).collect();
    let (_, cache) = model.forward(&refs, Mode::Train).unwrap();
    assert!(cache.u.as_slice().iter().all(|v| v.abs() > 1.0));
    let dz = DenseTensor::from_vec(4, 3, (0..12).map(|i| 0.01 * i as f64 - 0.05).collect()).unwrap();
    let g = model.backward(&cache, &dz, 1.0).unwrap();
    assert!(g.features.iter().all(|v| *v == 0.0));
}
