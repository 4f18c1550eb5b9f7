//! Training loop, evaluation and gradient snapshots.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::{batches, epoch_order, Dataset};
use crate::error::{LdcError, Result};
use crate::model::{argmax, Dims, LdcModel, NormKind};
use crate::nn::{adam_step, entropy, js_loss, kd_kl_loss, label_smooth, softmax, softmax_ce, AdamState, DenseTensor, Mode};
use crate::qat::{apply_freezing, update_oscillation, OscillationState, QatConfig};
use crate::teacher::TeacherLogits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    KdKl,
    KdJs,
    HardLabelTeacher,
}

impl LossKind {
    pub fn needs_teacher(self) -> bool {
        self != LossKind::Ce
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Ce => "ce",
            LossKind::KdKl => "kd_kl",
            LossKind::KdJs => "kd_js",
            LossKind::HardLabelTeacher => "hard_label_teacher",
        })
    }
}

impl FromStr for LossKind {
    type Err = LdcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ce" => Ok(LossKind::Ce),
            "kd_kl" | "kd" | "kl" => Ok(LossKind::KdKl),
            "kd_js" | "js" => Ok(LossKind::KdJs),
            "hard_label_teacher" | "hl_t" => Ok(LossKind::HardLabelTeacher),
            other => Err(LdcError::Config(format!("unknown loss '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub d: usize,
    pub d_v: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub clip: f64,
    /// Weight of the cross-entropy term; the distillation term gets `1 - gamma`.
    pub gamma: f64,
    pub temperature: f64,
    pub loss: LossKind,
    pub normalizer: NormKind,
    /// Active range of the straight-through estimator on the encoding sign.
    pub delta: f64,
    pub alpha_multiplier: f64,
    pub qat: QatConfig,
    pub seed: u64,
    /// Amount of label smoothing: targets become `(1 - eps) t + eps / K`.
    pub label_smoothing: f64,
    /// Evaluate on the test split after every epoch (otherwise only at the end).
    pub eval_every_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 64,
            d_v: 16,
            batch_size: 128,
            epochs: 50,
            lr0: 1e-3,
            clip: 1.0,
            gamma: 1.0,
            temperature: 1.0,
            loss: LossKind::Ce,
            normalizer: NormKind::None,
            delta: 1.0,
            alpha_multiplier: 1.0,
            qat: QatConfig::default(),
            seed: 0,
            label_smoothing: 0.0,
            eval_every_epoch: true,
        }
    }
}

impl TrainConfig {
    /// Default configuration at width `d` with `D / D_v = 4`.
    pub fn with_dim(d: usize) -> Self {
        TrainConfig {
            d,
            d_v: (d / 4).max(1),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LdcError::Config(m));
        if self.d == 0 || self.d_v == 0 || !self.d.is_multiple_of(self.d_v) {
            return bad(format!("D={} must be a positive multiple of D_v={}", self.d, self.d_v));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.batch_size < 2 {
            return bad(format!("batch size must be at least 2, got {}", self.batch_size));
        }
        if !(self.lr0 >= 0.0 && self.clip > 0.0 && self.delta > 0.0 && self.alpha_multiplier > 0.0) {
            return bad("learning rate, clip, delta and alpha multiplier must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.label_smoothing) {
            return bad(format!("label smoothing {} outside [0, 1]", self.label_smoothing));
        }
        if !(self.qat.momentum > 0.0 && self.qat.momentum <= 1.0 && self.qat.threshold >= 0.0) {
            return bad("QAT momentum must be in (0, 1] and threshold non-negative".into());
        }
        Ok(())
    }

    pub fn dims_for(&self, data: &Dataset) -> Dims {
        Dims {
            n: data.n_features,
            d: self.d,
            d_v: self.d_v,
            m: data.n_levels,
            k: data.n_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Mean entropy of `softmax(z)` over correct predictions; absent when there are none.
    pub mean_entropy_correct: Option<f64>,
    /// Mean entropy over wrong predictions; absent when there are none.
    pub mean_entropy_wrong: Option<f64>,
    pub per_class: Vec<ClassCount>,
    pub predictions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
    pub frozen_fraction: f64,
    pub frozen_features: usize,
    pub frozen_classes: usize,
    pub oscillations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainConfig,
    pub dims: Dims,
    pub epochs: Vec<EpochRecord>,
    pub final_accuracy: f64,
    pub mean_entropy_correct: Option<f64>,
    pub mean_entropy_wrong: Option<f64>,
    /// Frozen entries whose sign differs from the sign they were frozen with.
    pub frozen_sign_violations: usize,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| LdcError::Format(e.to_string()))
    }

    pub fn epochs_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,test_accuracy,frozen_fraction,frozen_features,frozen_classes,oscillations\n");
        for e in &self.epochs {
            let acc = e.test_accuracy.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                e.epoch, e.train_loss, acc, e.frozen_fraction, e.frozen_features, e.frozen_classes, e.oscillations
            );
        }
        s
    }

    /// Writes `report.json` and `epochs.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| LdcError::io(dir, e))?;
        let p = dir.join("report.json");
        fs::write(&p, self.to_json()?).map_err(|e| LdcError::io(&p, e))?;
        let p = dir.join("epochs.csv");
        fs::write(&p, self.epochs_csv()).map_err(|e| LdcError::io(&p, e))
    }
}

pub fn save_model(model: &LdcModel, path: &Path) -> Result<()> {
    let json = serde_json::to_string(model).map_err(|e| LdcError::Format(e.to_string()))?;
    fs::write(path, json).map_err(|e| LdcError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<LdcModel> {
    let text = fs::read_to_string(path).map_err(|e| LdcError::io(path, e))?;
    let model: LdcModel = serde_json::from_str(&text).map_err(|e| LdcError::Format(format!("{}: {e}", path.display())))?;
    model.validate()?;
    Ok(model)
}

fn one_hot(k: usize, label: usize) -> Vec<f64> {
    let mut t = vec![0.0; k];
    t[label] = 1.0;
    t
}

/// Loss and logit gradient for one sample.
fn sample_loss(cfg: &TrainConfig, z: &[f64], label: usize, teacher: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
    let k = z.len();
    let hard = match (cfg.loss, teacher) {
        (LossKind::HardLabelTeacher, Some(t)) => argmax(t),
        _ => label,
    };
    let mut target = one_hot(k, hard);
    if cfg.label_smoothing > 0.0 {
        target = label_smooth(&target, 1.0 - cfg.label_smoothing)?;
    }
    let distill = matches!(cfg.loss, LossKind::KdKl | LossKind::KdJs);
    if !distill || cfg.gamma == 1.0 {
        return Ok(softmax_ce(z, &target));
    }
    let zt = teacher.ok_or(LdcError::Config("distillation loss without teacher logits".into()))?;
    let (kd, dkd) = if cfg.loss == LossKind::KdKl {
        kd_kl_loss(z, zt, cfg.temperature)?
    } else {
        js_loss(z, zt, cfg.temperature)?
    };
    if cfg.gamma == 0.0 {
        return Ok((kd, dkd));
    }
    let (ce, dce) = softmax_ce(z, &target);
    let g = cfg.gamma;
    let dz = dce.iter().zip(&dkd).map(|(a, b)| g * a + (1.0 - g) * b).collect();
    Ok((g * ce + (1.0 - g) * kd, dz))
}

struct Optimizer {
    features: AdamState,
    classes: AdamState,
    norm_w: AdamState,
    norm_b: AdamState,
    vb: Vec<AdamState>,
}

impl Optimizer {
    fn new(model: &LdcModel, lr0: f64, total: u64) -> Self {
        let vb = &model.value_box;
        let d = model.dims.d;
        Optimizer {
            features: AdamState::new(model.features.values().len(), lr0, total),
            classes: AdamState::new(model.classes.values().len(), lr0, total),
            norm_w: AdamState::new(d, lr0, total),
            norm_b: AdamState::new(d, lr0, total),
            vb: vec![
                AdamState::new(vb.layer1.weight.as_slice().len(), lr0, total),
                AdamState::new(vb.layer1.bias.len(), lr0, total),
                AdamState::new(vb.bn.w.len(), lr0, total),
                AdamState::new(vb.bn.b.len(), lr0, total),
                AdamState::new(vb.layer2.weight.as_slice().len(), lr0, total),
                AdamState::new(vb.layer2.bias.len(), lr0, total),
            ],
        }
    }

    fn step(&mut self, model: &mut LdcModel, g: &crate::model::Gradients, clip: f64) -> Result<()> {
        let frozen = model.features.frozen().to_vec();
        adam_step(model.features.values_mut(), &g.features, Some(&frozen), &mut self.features, clip)?;
        let frozen = model.classes.frozen().to_vec();
        adam_step(model.classes.values_mut(), &g.classes, Some(&frozen), &mut self.classes, clip)?;
        if let Some((w, b)) = model.norm.params_mut() {
            adam_step(w, &g.norm_w, None, &mut self.norm_w, clip)?;
            if let Some(b) = b {
                adam_step(b, &g.norm_b, None, &mut self.norm_b, clip)?;
            }
        }
        let vb = &mut model.value_box;
        let vg = &g.value_box;
        adam_step(vb.layer1.weight.as_mut_slice(), vg.w1.as_slice(), None, &mut self.vb[0], clip)?;
        adam_step(&mut vb.layer1.bias, &vg.b1, None, &mut self.vb[1], clip)?;
        adam_step(&mut vb.bn.w, &vg.bn_w, None, &mut self.vb[2], clip)?;
        adam_step(&mut vb.bn.b, &vg.bn_b, None, &mut self.vb[3], clip)?;
        adam_step(vb.layer2.weight.as_mut_slice(), vg.w2.as_slice(), None, &mut self.vb[4], clip)?;
        adam_step(&mut vb.layer2.bias, &vg.b2, None, &mut self.vb[5], clip)?;
        Ok(())
    }
}

fn sample_rows<'a>(data: &'a Dataset, idx: &[usize]) -> Vec<&'a [u16]> {
    idx.iter().map(|&i| data.row(i)).collect()
}

fn divergence_dump(model: &LdcModel, cache: Option<&crate::model::ForwardCache>) -> String {
    let mut s = String::new();
    let summary = |name: &str, v: &[f64], s: &mut String| {
        let h = Histogram::new(v, 10);
        let _ = writeln!(s, "{name}: {:?} edges {:?}", h.counts, h.edges);
    };
    summary("feature latents", model.features.values(), &mut s);
    summary("class latents", model.classes.values(), &mut s);
    if let Some(c) = cache {
        summary("pre-sign encoding", c.u.as_slice(), &mut s);
    }
    s
}

/// Trains a model. `teacher` holds logits aligned with `train` and is required
/// exactly when the loss uses a teacher.
pub fn train_ldc(
    cfg: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    teacher: Option<&TeacherLogits>,
) -> Result<(LdcModel, RunReport)> {
    cfg.validate()?;
    train.validate()?;
    test.validate()?;
    if train.n_features != test.n_features || train.n_levels != test.n_levels || train.n_classes != test.n_classes {
        return Err(LdcError::Shape("train and test splits disagree in dimensions".into()));
    }
    match (cfg.loss.needs_teacher(), teacher) {
        (true, None) => return Err(LdcError::Config(format!("loss {} needs teacher logits", cfg.loss))),
        (false, Some(_)) => return Err(LdcError::Config("teacher logits given for a cross-entropy-only run".into())),
        (_, Some(t)) if t.rows() != train.len() || t.cols() != train.n_classes => {
            return Err(LdcError::CountMismatch {
                what: "teacher logits rows".into(),
                expected: train.len(),
                found: t.rows(),
            })
        }
        _ => {}
    }
    let teacher_rows: Option<Vec<Vec<f64>>> = teacher.map(|t| (0..t.rows()).map(|r| t.row_f64(r)).collect());

    let dims = cfg.dims_for(train);
    let mut model = LdcModel::new(dims, cfg.normalizer, cfg.alpha_multiplier, cfg.seed)?;
    let all: Vec<usize> = (0..train.len()).collect();
    let steps_per_epoch = batches(&all, cfg.batch_size, 2).len() as u64;
    let total = (steps_per_epoch * cfg.epochs as u64).max(1);
    let mut opt = Optimizer::new(&model, cfg.lr0, total);
    let mut osc_f = OscillationState::new(&model.features, cfg.qat);
    let mut osc_c = OscillationState::new(&model.classes, cfg.qat);
    let mut frozen_sign_f: Vec<i8> = vec![0; model.features.values().len()];
    let mut frozen_sign_c: Vec<i8> = vec![0; model.classes.values().len()];
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let order = epoch_order(train.len(), cfg.seed, epoch as u64);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        let mut oscillations = 0usize;
        for batch in batches(&order, cfg.batch_size, 2) {
            let rows = sample_rows(train, batch);
            let (z, cache) = model.forward(&rows, Mode::Train)?;
            let inv = 1.0 / batch.len() as f64;
            let mut dz = DenseTensor::zeros(batch.len(), dims.k);
            for (r, &i) in batch.iter().enumerate() {
                let t = teacher_rows.as_ref().map(|t| t[i].as_slice());
                let (l, g) = sample_loss(cfg, z.row(r), train.labels[i], t)?;
                loss_sum += l;
                for (o, gv) in dz.row_mut(r).iter_mut().zip(g) {
                    *o = gv * inv;
                }
            }
            seen += batch.len();
            if !loss_sum.is_finite() {
                let dump = divergence_dump(&model, Some(&cache));
                log::error!("non-finite loss at epoch {epoch}\n{dump}");
                return Err(LdcError::Diverged(format!("loss became {loss_sum} at epoch {epoch}\n{dump}")));
            }
            let grads = model.backward(&cache, &dz, cfg.delta)?;
            model.commit_stats(&cache);
            opt.step(&mut model, &grads, cfg.clip)?;

            oscillations += update_oscillation(&mut osc_f, model.features.values())?;
            oscillations += update_oscillation(&mut osc_c, model.classes.values())?;
            if apply_freezing(&osc_f, &mut model.features, epoch)? > 0 {
                record_frozen_signs(&model.features, &mut frozen_sign_f);
            }
            if apply_freezing(&osc_c, &mut model.classes, epoch)? > 0 {
                record_frozen_signs(&model.classes, &mut frozen_sign_c);
            }
        }
        let test_accuracy = if cfg.eval_every_epoch || epoch + 1 == cfg.epochs {
            Some(evaluate(&model, test)?.accuracy)
        } else {
            None
        };
        let ff = model.features.frozen_count();
        let fc = model.classes.frozen_count();
        let total_entries = (model.features.values().len() + model.classes.values().len()) as f64;
        let record = EpochRecord {
            epoch,
            train_loss: if seen > 0 { loss_sum / seen as f64 } else { 0.0 },
            test_accuracy,
            frozen_fraction: (ff + fc) as f64 / total_entries,
            frozen_features: ff,
            frozen_classes: fc,
            oscillations,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} test acc {} frozen {:.4}",
            record.train_loss,
            test_accuracy.map_or("-".to_string(), |a| format!("{:.4}", a)),
            record.frozen_fraction
        );
        records.push(record);
    }

    let frozen_sign_violations = count_violations(&model.features, &frozen_sign_f) + count_violations(&model.classes, &frozen_sign_c);
    if frozen_sign_violations > 0 {
        log::error!("{frozen_sign_violations} frozen entries changed sign");
    }
    let eval = evaluate(&model, test)?;
    let report = RunReport {
        config: cfg.clone(),
        dims,
        epochs: records,
        final_accuracy: eval.accuracy,
        mean_entropy_correct: eval.mean_entropy_correct,
        mean_entropy_wrong: eval.mean_entropy_wrong,
        frozen_sign_violations,
    };
    Ok((model, report))
}

fn record_frozen_signs(latent: &crate::model::LatentMatrix, signs: &mut [i8]) {
    for (i, (f, v)) in latent.frozen().iter().zip(latent.values()).enumerate() {
        if *f && signs[i] == 0 {
            signs[i] = crate::model::sgn(*v);
        }
    }
}

fn count_violations(latent: &crate::model::LatentMatrix, signs: &[i8]) -> usize {
    latent
        .frozen()
        .iter()
        .zip(latent.values())
        .zip(signs)
        .filter(|((f, v), s)| **f && crate::model::sgn(**v) != **s)
        .count()
}

/// Eval-mode accuracy and prediction entropies.
pub fn evaluate(model: &LdcModel, data: &Dataset) -> Result<EvalReport> {
    let k = model.dims.k;
    let mut per_class = vec![ClassCount { correct: 0, total: 0 }; k];
    let mut predictions = Vec::with_capacity(data.len());
    let (mut h_t, mut n_t, mut h_f, mut n_f) = (0.0, 0usize, 0.0, 0usize);
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(1000) {
        let z = model.logits(&sample_rows(data, chunk))?;
        for (r, &i) in chunk.iter().enumerate() {
            let zr = z.row(r);
            let pred = argmax(zr);
            let h = entropy(&softmax(zr));
            let label = data.labels[i];
            per_class[label].total += 1;
            if pred == label {
                per_class[label].correct += 1;
                h_t += h;
                n_t += 1;
            } else {
                h_f += h;
                n_f += 1;
            }
            predictions.push(pred);
        }
    }
    Ok(EvalReport {
        accuracy: if data.is_empty() { 0.0 } else { n_t as f64 / data.len() as f64 },
        mean_entropy_correct: (n_t > 0).then(|| h_t / n_t as f64),
        mean_entropy_wrong: (n_f > 0).then(|| h_f / n_f as f64),
        per_class,
        predictions,
    })
}

/// Equal-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let (lo, hi) = if values.is_empty() {
            (0.0, 1.0)
        } else if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        };
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for v in values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", self.edges[i], self.edges[i + 1], c);
        }
        s
    }
}

/// Distributions of one sample's encoding, feature gradient and feature latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub label: usize,
    pub predicted: usize,
    pub pre_sign: Histogram,
    pub feature_grad: Histogram,
    pub feature_latent: Histogram,
    pub zero_grad_fraction: f64,
    pub pre_sign_variance: f64,
}

impl Snapshot {
    /// Writes the three histograms and a JSON summary into `dir` with the given file prefix.
    pub fn write(&self, dir: &Path, prefix: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| LdcError::io(dir, e))?;
        for (name, h) in [
            ("pre_sign", &self.pre_sign),
            ("feature_grad", &self.feature_grad),
            ("feature_latent", &self.feature_latent),
        ] {
            let p = dir.join(format!("{prefix}_{name}.csv"));
            fs::write(&p, h.to_csv()).map_err(|e| LdcError::io(&p, e))?;
        }
        let p = dir.join(format!("{prefix}_summary.json"));
        let json = serde_json::to_string_pretty(self).map_err(|e| LdcError::Format(e.to_string()))?;
        fs::write(&p, json).map_err(|e| LdcError::io(&p, e))
    }
}

/// Cross-entropy gradient of a single sample. The normalizer runs with its
/// running statistics (a one-sample batch has no batch statistics) while the
/// gradient still flows through it. With `zero_upstream` the logit gradient is
/// replaced by zeros.
pub fn gradient_snapshot(
    model: &LdcModel,
    sample: &[u16],
    label: usize,
    delta: f64,
    bins: usize,
    zero_upstream: bool,
) -> Result<Snapshot> {
    if label >= model.dims.k {
        return Err(LdcError::Config(format!("label {label} outside [0, {}]", model.dims.k - 1)));
    }
    let (z, cache) = model.forward(&[sample], Mode::Eval)?;
    let (_, g) = softmax_ce(z.row(0), &one_hot(model.dims.k, label));
    let dz = if zero_upstream {
        DenseTensor::zeros(1, model.dims.k)
    } else {
        DenseTensor::from_vec(1, model.dims.k, g)?
    };
    let grads = model.backward(&cache, &dz, delta)?;
    let u = cache.u.as_slice();
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    let var = u.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / u.len() as f64;
    let zeros = grads.features.iter().filter(|v| **v == 0.0).count();
    Ok(Snapshot {
        label,
        predicted: argmax(z.row(0)),
        pre_sign: Histogram::new(u, bins),
        feature_grad: Histogram::new(&grads.features, bins),
        feature_latent: Histogram::new(model.features.values(), bins),
        zero_grad_fraction: zeros as f64 / grads.features.len() as f64,
        pre_sign_variance: var,
    })
}

/// Index of the first misclassified sample of `data`, if any.
pub fn first_misclassified(model: &LdcModel, data: &Dataset) -> Result<Option<usize>> {
    let eval = evaluate(model, data)?;
    Ok(eval.predictions.iter().zip(&data.labels).position(|(p, l)| p != l))
}
