//! Independent finite-difference oracle for the full model gradient.
//!
//! Every sign in the network is replaced by a straight-through surrogate
//! `sgn(x0) + htanh(x) - htanh(x0)` around the base point `x0`, and the scaling
//! factors are frozen at their base values. The surrogate agrees with the real
//! network at the base point and its exact derivative is what the analytic
//! backward pass claims to compute, so central differences of the surrogate
//! check the backward pass entry by entry. The oracle evaluates the value
//! network once per feature occurrence and normalizes with plain loops; it
//! shares no code with the model's forward pass.

#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use ldc::model::{Dims, LdcModel, NormKind, Normalizer};
use ldc::nn::{softmax_ce, DenseTensor, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GROUPS: [&str; 10] = [
    "F", "C", "norm.w", "norm.b", "vb.w1", "vb.b1", "vb.bn.w", "vb.bn.b", "vb.w2", "vb.b2",
];

fn htanh(x: f64, delta: f64) -> f64 {
    x.clamp(-delta, delta)
}

fn sgn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn group_mut(m: &mut LdcModel, g: usize) -> &mut [f64] {
    match g {
        0 => m.features.values_mut(),
        1 => m.classes.values_mut(),
        2 | 3 => match &mut m.norm {
            Normalizer::Batch(bn) => {
                if g == 2 {
                    &mut bn.w
                } else {
                    &mut bn.b
                }
            }
            _ => &mut [],
        },
        4 => m.value_box.layer1.weight.as_mut_slice(),
        5 => &mut m.value_box.layer1.bias,
        6 => &mut m.value_box.bn.w,
        7 => &mut m.value_box.bn.b,
        8 => m.value_box.layer2.weight.as_mut_slice(),
        9 => &mut m.value_box.layer2.bias,
        _ => unreachable!(),
    }
}

struct Base {
    sgn_f: Vec<f64>,
    f0: Vec<f64>,
    alpha_f: Vec<f64>,
    sgn_c: Vec<f64>,
    c0: Vec<f64>,
    alpha_c: f64,
    h2_0: Vec<f64>,
    u0: Vec<f64>,
}

struct Trace {
    loss: f64,
    h2: Vec<f64>,
    u: Vec<f64>,
}

fn batch_norm(x: &mut [f64], rows: usize, cols: usize, w: &[f64], b: &[f64], eps: f64) {
    for c in 0..cols {
        let mean = (0..rows).map(|r| x[r * cols + c]).sum::<f64>() / rows as f64;
        let var = (0..rows).map(|r| (x[r * cols + c] - mean).powi(2)).sum::<f64>() / rows as f64;
        for r in 0..rows {
            x[r * cols + c] = (x[r * cols + c] - mean) / (var + eps).sqrt() * w[c] + b[c];
        }
    }
}

fn run(model: &LdcModel, rows: &[Vec<u16>], targets: &[usize], base: Option<&Base>, delta: f64) -> Trace {
    let Dims { n, d, d_v, m, k } = model.dims;
    let batch = rows.len();
    let vb = &model.value_box;
    let hidden = vb.layer1.out_dim();

    // value network on every occurrence
    let occ = batch * n;
    let mut h1 = vec![0.0; occ * hidden];
    for (o, lvl) in rows.iter().flatten().enumerate() {
        let x = *lvl as f64 / (m - 1) as f64;
        for j in 0..hidden {
            h1[o * hidden + j] = x * vb.layer1.weight.get(j, 0) + vb.layer1.bias[j];
        }
    }
    batch_norm(&mut h1, occ, hidden, &vb.bn.w, &vb.bn.b, vb.bn.eps);
    let mut h2 = vec![0.0; occ * d_v];
    for o in 0..occ {
        for q in 0..d_v {
            let mut acc = vb.layer2.bias[q];
            for j in 0..hidden {
                acc += h1[o * hidden + j].tanh() * vb.layer2.weight.get(q, j);
            }
            h2[o * d_v + q] = acc;
        }
    }
    let v: Vec<f64> = match base {
        None => h2.iter().map(|x| sgn(*x)).collect(),
        Some(bs) => h2
            .iter()
            .zip(&bs.h2_0)
            .map(|(x, x0)| sgn(*x0) + htanh(*x, 1.0) - htanh(*x0, 1.0))
            .collect(),
    };

    let fv = model.features.values();
    let cv = model.classes.values();
    let mut y = vec![0.0; batch * d];
    for b in 0..batch {
        for i in 0..n {
            for j in 0..d {
                let w = match base {
                    None => {
                        let (_, alpha) = model.binarized_features();
                        alpha[j] * sgn(fv[i * d + j])
                    }
                    Some(bs) => bs.alpha_f[j] * (bs.sgn_f[i * d + j] + fv[i * d + j] - bs.f0[i * d + j]),
                };
                y[b * d + j] += w * v[(b * n + i) * d_v + j % d_v];
            }
        }
    }
    let mut u = y.clone();
    match &model.norm {
        Normalizer::None => {}
        Normalizer::Batch(bn) => batch_norm(&mut u, batch, d, &bn.w, &bn.b, bn.eps),
        _ => panic!("oracle covers the none and batch normalizers"),
    }
    let s: Vec<f64> = match base {
        None => u.iter().map(|x| sgn(*x)).collect(),
        Some(bs) => u
            .iter()
            .zip(&bs.u0)
            .map(|(x, x0)| sgn(*x0) + htanh(*x, delta) - htanh(*x0, delta))
            .collect(),
    };
    let (_, alpha_c) = ldc::model::binarize_class(&model.classes);
    let mut loss = 0.0;
    for b in 0..batch {
        let z: Vec<f64> = (0..k)
            .map(|kk| {
                (0..d)
                    .map(|j| {
                        let c = match base {
                            None => alpha_c * sgn(cv[kk * d + j]),
                            Some(bs) => bs.alpha_c * (bs.sgn_c[kk * d + j] + cv[kk * d + j] - bs.c0[kk * d + j]),
                        };
                        c * s[b * d + j]
                    })
                    .sum()
            })
            .collect();
        let mut t = vec![0.0; k];
        t[targets[b]] = 1.0;
        loss += softmax_ce(&z, &t).0;
    }
    Trace {
        loss: loss / batch as f64,
        h2,
        u,
    }
}

/// Largest relative error per parameter group between the analytic gradient and
/// central differences (step `1e-4`) of the surrogate, on a random toy model.
pub fn surrogate_gradient_errors(
    dims: Dims,
    norm: NormKind,
    alpha_multiplier: f64,
    batch: usize,
    delta: f64,
    seed: u64,
) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut model = LdcModel::new(dims, norm, alpha_multiplier, seed).unwrap();
    if let Normalizer::Batch(bn) = &mut model.norm {
        for (w, b) in bn.w.iter_mut().zip(bn.b.iter_mut()) {
            *w = rng.random_range(0.3..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            *b = rng.random_range(-0.3..0.3);
        }
    }
    let rows: Vec<Vec<u16>> = (0..batch)
        .map(|_| (0..dims.n).map(|_| rng.random_range(0..dims.m as u16)).collect())
        .collect();
    let targets: Vec<usize> = (0..batch).map(|_| rng.random_range(0..dims.k)).collect();

    let refs: Vec<&[u16]> = rows.iter().map(|r| r.as_slice()).collect();
    let (z, cache) = model.forward(&refs, Mode::Train).unwrap();
    let mut dz = DenseTensor::zeros(batch, dims.k);
    for b in 0..batch {
        let mut t = vec![0.0; dims.k];
        t[targets[b]] = 1.0;
        let (_, g) = softmax_ce(z.row(b), &t);
        for (kk, v) in g.iter().enumerate() {
            dz.set(b, kk, v / batch as f64);
        }
    }
    let grads = model.backward(&cache, &dz, delta).unwrap();

    let plain = run(&model, &rows, &targets, None, delta);
    let (_, alpha_f) = model.binarized_features();
    let (_, alpha_c) = ldc::model::binarize_class(&model.classes);
    let base = Base {
        sgn_f: model.features.values().iter().map(|v| sgn(*v)).collect(),
        f0: model.features.values().to_vec(),
        alpha_f,
        sgn_c: model.classes.values().iter().map(|v| sgn(*v)).collect(),
        c0: model.classes.values().to_vec(),
        alpha_c,
        h2_0: plain.h2,
        u0: plain.u,
    };

    let analytic: Vec<Vec<f64>> = vec![
        grads.features.clone(),
        grads.classes.iter().map(|g| g * alpha_c).collect(),
        grads.norm_w.clone(),
        grads.norm_b.clone(),
        grads.value_box.w1.as_slice().to_vec(),
        grads.value_box.b1.clone(),
        grads.value_box.bn_w.clone(),
        grads.value_box.bn_b.clone(),
        grads.value_box.w2.as_slice().to_vec(),
        grads.value_box.b2.clone(),
    ];
    let h = 1e-4;
    let mut out = Vec::new();
    for (g, name) in GROUPS.iter().enumerate() {
        let len = group_mut(&mut model.clone(), g).len();
        let mut worst: f64 = 0.0;
        for i in 0..len {
            let mut p = model.clone();
            group_mut(&mut p, g)[i] += h;
            let mut q = model.clone();
            group_mut(&mut q, g)[i] -= h;
            let num = (run(&p, &rows, &targets, Some(&base), delta).loss
                - run(&q, &rows, &targets, Some(&base), delta).loss)
                / (2.0 * h);
            let a = analytic[g][i];
            // the floor keeps exactly-zero gradients (bias and scale before a batch
            // normalization) from turning rounding noise into a relative error
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        if len > 0 {
            out.push((*name, worst));
        }
    }
    out
}
