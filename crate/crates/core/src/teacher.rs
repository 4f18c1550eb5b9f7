//! Real-valued MLP teacher, ensemble soft targets and the teacher logits file.
//!
//! Logits file layout (little-endian): magic `LDCT`, `u32` version, `u32` rows,
//! `u32` cols, then `rows * cols` `f32` values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{batches, epoch_order, Dataset};
use crate::error::{LdcError, Result};
use crate::model::argmax;
use crate::nn::{adam_step, softmax, softmax_ce, AdamState, DenseTensor, Linear, LinearCache};

pub const LOGITS_MAGIC: &[u8; 4] = b"LDCT";
pub const LOGITS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub hidden: [usize; 2],
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            hidden: [256, 128],
            epochs: 30,
            lr: 1e-3,
            batch_size: 128,
            seed: 0,
        }
    }
}

/// Input -> hidden -> hidden -> classes, ReLU between layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherModel {
    pub layers: Vec<Linear>,
    pub n_levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherReport {
    pub epoch_loss: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

fn input_batch(data: &Dataset, idx: &[usize]) -> DenseTensor {
    let scale = 1.0 / (data.n_levels - 1) as f64;
    let mut x = DenseTensor::zeros(idx.len(), data.n_features);
    for (r, &i) in idx.iter().enumerate() {
        for (o, v) in x.row_mut(r).iter_mut().zip(data.row(i)) {
            *o = *v as f64 * scale;
        }
    }
    x
}

fn relu(t: &mut DenseTensor) {
    t.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
}

impl TeacherModel {
    pub fn init(n_features: usize, n_classes: usize, n_levels: usize, hidden: [usize; 2], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = vec![
            Linear::init_uniform(n_features, hidden[0], &mut rng),
            Linear::init_uniform(hidden[0], hidden[1], &mut rng),
            Linear::init_uniform(hidden[1], n_classes, &mut rng),
        ];
        TeacherModel { layers, n_levels }
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, Linear::out_dim)
    }

    fn forward_cached(&self, x: &DenseTensor) -> Result<(DenseTensor, Vec<LinearCache>, Vec<DenseTensor>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (mut out, cache) = layer.forward(&h)?;
            caches.push(cache);
            if i + 1 < self.layers.len() {
                relu(&mut out);
                acts.push(out.clone());
            }
            h = out;
        }
        Ok((h, caches, acts))
    }

    /// Logits for the given rows of a dataset.
    pub fn logits_for(&self, data: &Dataset, idx: &[usize]) -> Result<DenseTensor> {
        Ok(self.forward_cached(&input_batch(data, idx))?.0)
    }

    /// Logits for a whole dataset split.
    pub fn logits(&self, data: &Dataset) -> Result<TeacherLogits> {
        let mut values = Vec::with_capacity(data.len() * self.n_classes());
        let all: Vec<usize> = (0..data.len()).collect();
        for chunk in all.chunks(1024) {
            let z = self.logits_for(data, chunk)?;
            values.extend(z.as_slice().iter().map(|v| *v as f32));
        }
        TeacherLogits::new(data.len(), self.n_classes(), values)
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let logits = self.logits(data)?;
        let correct = (0..data.len())
            .filter(|&i| argmax(&logits.row_f64(i)) == data.labels[i])
            .count();
        Ok(correct as f64 / data.len() as f64)
    }
}

/// Trains the teacher with cross-entropy and Adam (learning rate decayed linearly to zero).
pub fn train_teacher(cfg: &TeacherConfig, train: &Dataset, test: Option<&Dataset>) -> Result<(TeacherModel, TeacherReport)> {
    train.validate()?;
    if cfg.batch_size == 0 {
        return Err(LdcError::Config("teacher batch size must be positive".into()));
    }
    let mut model = TeacherModel::init(train.n_features, train.n_classes, train.n_levels, cfg.hidden, cfg.seed);
    let steps_per_epoch = batches(&(0..train.len()).collect::<Vec<_>>(), cfg.batch_size, 1).len() as u64;
    let total = (steps_per_epoch * cfg.epochs as u64).max(1);
    let mut states: Vec<(AdamState, AdamState)> = model
        .layers
        .iter()
        .map(|l| {
            (
                AdamState::new(l.weight.as_slice().len(), cfg.lr, total),
                AdamState::new(l.bias.len(), cfg.lr, total),
            )
        })
        .collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let k = train.n_classes;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(train.len(), cfg.seed, epoch as u64);
        let mut loss_sum = 0.0;
        for batch in batches(&order, cfg.batch_size, 1) {
            let x = input_batch(train, batch);
            let (z, caches, acts) = model.forward_cached(&x)?;
            let mut dz = DenseTensor::zeros(batch.len(), k);
            let inv = 1.0 / batch.len() as f64;
            for (r, &i) in batch.iter().enumerate() {
                let mut t = vec![0.0; k];
                t[train.labels[i]] = 1.0;
                let (l, g) = softmax_ce(z.row(r), &t);
                loss_sum += l;
                for (o, gv) in dz.row_mut(r).iter_mut().zip(g) {
                    *o = gv * inv;
                }
            }
            let mut up = dz;
            for li in (0..model.layers.len()).rev() {
                let grads = model.layers[li].backward(&caches[li], &up)?;
                let (sw, sb) = &mut states[li];
                adam_step(model.layers[li].weight.as_mut_slice(), grads.dw.as_slice(), None, sw, f64::MAX)?;
                adam_step(&mut model.layers[li].bias, &grads.db, None, sb, f64::MAX)?;
                if li > 0 {
                    up = grads.dx;
                    for (g, a) in up.as_mut_slice().iter_mut().zip(acts[li - 1].as_slice()) {
                        if *a <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
            }
        }
        let mean = loss_sum / train.len() as f64;
        if !mean.is_finite() {
            return Err(LdcError::Diverged(format!("teacher loss {mean} at epoch {epoch}")));
        }
        log::info!("teacher epoch {epoch}: loss {mean:.4}");
        epoch_loss.push(mean);
    }
    let train_accuracy = model.accuracy(train)?;
    let test_accuracy = test.map(|t| model.accuracy(t)).transpose()?;
    Ok((
        model,
        TeacherReport {
            epoch_loss,
            train_accuracy,
            test_accuracy,
        },
    ))
}

/// Average of the member softmax distributions.
pub fn ensemble_soft_targets(members: &[&[f64]]) -> Result<Vec<f64>> {
    let first = members.first().ok_or_else(|| LdcError::Config("empty teacher ensemble".into()))?;
    let k = first.len();
    let mut p = vec![0.0; k];
    for z in members {
        if z.len() != k {
            return Err(LdcError::Shape(format!("ensemble member with {} outputs, expected {k}", z.len())));
        }
        for (a, b) in p.iter_mut().zip(softmax(z)) {
            *a += b;
        }
    }
    let g = members.len() as f64;
    p.iter_mut().for_each(|v| *v /= g);
    Ok(p)
}

/// Teacher logits aligned row by row with a dataset split.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherLogits {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl TeacherLogits {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(LdcError::Shape(format!("{} logits for {rows}x{cols}", values.len())));
        }
        Ok(TeacherLogits { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_f64(&self, r: usize) -> Vec<f64> {
        self.row(r).iter().map(|v| *v as f64).collect()
    }

    /// Combines several teachers into effective logits `log(mean_g softmax(z_g))`.
    pub fn ensemble(members: &[TeacherLogits]) -> Result<TeacherLogits> {
        let first = members.first().ok_or_else(|| LdcError::Config("empty teacher ensemble".into()))?;
        if members.iter().any(|m| m.rows != first.rows || m.cols != first.cols) {
            return Err(LdcError::Shape("ensemble members disagree in shape".into()));
        }
        let mut values = Vec::with_capacity(first.values.len());
        for r in 0..first.rows {
            let rows: Vec<Vec<f64>> = members.iter().map(|m| m.row_f64(r)).collect();
            let refs: Vec<&[f64]> = rows.iter().map(|v| v.as_slice()).collect();
            let p = ensemble_soft_targets(&refs)?;
            values.extend(p.iter().map(|v| v.max(f64::MIN_POSITIVE).ln() as f32));
        }
        TeacherLogits::new(first.rows, first.cols, values)
    }

    /// Labels predicted by the teacher, lowest index on ties.
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.rows).map(|r| argmax(&self.row_f64(r))).collect()
    }
}

pub fn export_logits(logits: &TeacherLogits, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| LdcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| LdcError::io(path, e));
    write(LOGITS_MAGIC)?;
    write(&LOGITS_VERSION.to_le_bytes())?;
    write(&(logits.rows as u32).to_le_bytes())?;
    write(&(logits.cols as u32).to_le_bytes())?;
    for v in &logits.values {
        write(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| LdcError::io(path, e))
}

/// Reads a logits file, checking the shape when `expected = Some((rows, cols))`.
pub fn import_logits(path: &Path, expected: Option<(usize, usize)>) -> Result<TeacherLogits> {
    let file = File::open(path).map_err(|e| LdcError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|e| LdcError::io(path, e))?;
    if &header[0..4] != LOGITS_MAGIC {
        return Err(LdcError::Format(format!("{}: not a teacher logits file", path.display())));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != LOGITS_VERSION {
        return Err(LdcError::Format(format!("unsupported logits file version {version}")));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    if let Some((er, ec)) = expected {
        if rows != er {
            return Err(LdcError::CountMismatch {
                what: "teacher logits rows".into(),
                expected: er,
                found: rows,
            });
        }
        if cols != ec {
            return Err(LdcError::CountMismatch {
                what: "teacher logits columns".into(),
                expected: ec,
                found: cols,
            });
        }
    }
    let mut bytes = vec![0u8; rows * cols * 4];
    r.read_exact(&mut bytes).map_err(|e| LdcError::io(path, e))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| LdcError::io(path, e))? != 0 {
        return Err(LdcError::Format(format!("{}: trailing bytes after logits", path.display())));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(LdcError::NonFinite(format!("logits in {}", path.display())));
    }
    TeacherLogits::new(rows, cols, values)
}
