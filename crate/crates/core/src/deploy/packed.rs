use std::fs;
use std::path::Path;

use super::bits::BitMatrix;
use super::fold::{fold_bn, Thresholds};
use crate::error::{LdcError, Result};
use crate::model::{binarize_class, Dims, LdcModel, Normalizer};

pub const MODEL_MAGIC: &[u8; 4] = b"LDCV";
pub const MODEL_VERSION: u16 = 1;
const FLAG_THRESHOLDS: u8 = 1;

/// Bit-packed integer-only classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedModel {
    dims: Dims,
    lut: BitMatrix,
    fbits: BitMatrix,
    cbits: BitMatrix,
    /// `D x N` transpose of `fbits`, so each dimension is one contiguous bit row.
    fcols: BitMatrix,
    thresholds: Option<Thresholds>,
}

impl PackedModel {
    pub fn new(dims: Dims, lut: BitMatrix, fbits: BitMatrix, cbits: BitMatrix, thresholds: Option<Thresholds>) -> Result<Self> {
        dims.validate()?;
        let shape_ok = (lut.rows(), lut.cols()) == (dims.m, dims.d_v)
            && (fbits.rows(), fbits.cols()) == (dims.n, dims.d)
            && (cbits.rows(), cbits.cols()) == (dims.k, dims.d);
        if !shape_ok {
            return Err(LdcError::Shape("packed bit matrices disagree with the model dimensions".into()));
        }
        if let Some(t) = &thresholds {
            if t.theta.len() != dims.d || t.flip.len() != dims.d || t.const_dim.len() != dims.d {
                return Err(LdcError::Shape("threshold vectors must have length D".into()));
            }
            let bound = dims.n as i64 + 1;
            if t.theta.iter().any(|&v| (v as i64).abs() > bound) {
                return Err(LdcError::Format(format!("threshold outside [-{bound}, {bound}]")));
            }
        }
        let fcols = fbits.transpose();
        Ok(PackedModel {
            dims,
            lut,
            fbits,
            cbits,
            fcols,
            thresholds,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn lut(&self) -> &BitMatrix {
        &self.lut
    }

    pub fn fbits(&self) -> &BitMatrix {
        &self.fbits
    }

    pub fn cbits(&self) -> &BitMatrix {
        &self.cbits
    }

    pub fn thresholds(&self) -> Option<&Thresholds> {
        self.thresholds.as_ref()
    }

    pub fn has_thresholds(&self) -> bool {
        self.thresholds.is_some()
    }

    /// Rebuilds the model with replaced bit matrices (thresholds kept).
    pub fn with_bits(&self, lut: BitMatrix, fbits: BitMatrix, cbits: BitMatrix) -> Result<Self> {
        PackedModel::new(self.dims, lut, fbits, cbits, self.thresholds.clone())
    }

    /// Integer accumulations `y_d = N - 2 popcount(F_{:,d} xor V(x)_{d mod D_v})`.
    pub fn accumulate(&self, sample: &[u16]) -> Result<Vec<i32>> {
        let Dims { n, d, d_v, m, .. } = self.dims;
        if sample.len() != n {
            return Err(LdcError::Shape(format!("sample has {} features, model expects {n}", sample.len())));
        }
        let words = n.div_ceil(64);
        // value bits regrouped per value dimension: vcols[j] holds bit i = V(x_i)_j
        let mut vcols = vec![0u64; d_v * words];
        for (i, &lvl) in sample.iter().enumerate() {
            let l = lvl as usize;
            if l >= m {
                return Err(LdcError::Config(format!("feature level {l} outside [0, {}]", m - 1)));
            }
            let row = self.lut.row(l);
            for j in 0..d_v {
                if row[j / 64] >> (j % 64) & 1 == 1 {
                    vcols[j * words + i / 64] |= 1 << (i % 64);
                }
            }
        }
        let mut y = vec![0i32; d];
        for (dd, out) in y.iter_mut().enumerate() {
            let f = self.fcols.row(dd);
            let v = &vcols[(dd % d_v) * words..(dd % d_v + 1) * words];
            let diff: u32 = f.iter().zip(v).map(|(a, b)| (a ^ b).count_ones()).sum();
            *out = n as i32 - 2 * diff as i32;
        }
        Ok(y)
    }

    /// Sample bits packed into words, bit `d` set for `s_d = +1`.
    pub fn encode(&self, y: &[i32]) -> Vec<u64> {
        let d = self.dims.d;
        let mut s = vec![0u64; d.div_ceil(64)];
        for (dd, &yd) in y.iter().enumerate() {
            let bit = match &self.thresholds {
                Some(t) => t.bit(dd, yd),
                None => yd >= 0,
            };
            if bit {
                s[dd / 64] |= 1 << (dd % 64);
            }
        }
        s
    }

    /// `z_k = D - 2 popcount(C_k xor s)`.
    pub fn similarity(&self, s: &[u64]) -> Vec<i32> {
        let d = self.dims.d as i32;
        (0..self.dims.k)
            .map(|k| {
                let diff: u32 = self.cbits.row(k).iter().zip(s).map(|(a, b)| (a ^ b).count_ones()).sum();
                d - 2 * diff as i32
            })
            .collect()
    }
}

fn argmax_i32(z: &[i32]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

/// Label (lowest index on ties) and integer class scores for one sample.
pub fn infer_packed(pm: &PackedModel, sample: &[u16]) -> Result<(usize, Vec<i32>)> {
    let y = pm.accumulate(sample)?;
    let z = pm.similarity(&pm.encode(&y));
    Ok((argmax_i32(&z), z))
}

/// Folds the normalizer, tabulates the value network and packs every sign.
pub fn pack_model(model: &LdcModel) -> Result<PackedModel> {
    model.validate()?;
    let dims = model.dims;
    let (fsigns, alpha) = model.binarized_features();
    let thresholds = match &model.norm {
        Normalizer::None => None,
        Normalizer::Batch(bn) => Some(fold_bn(bn, &alpha, dims.n)?),
        other => {
            return Err(LdcError::Fold(format!(
                "{} normalization depends on the whole sample and has no per-dimension threshold",
                other.kind()
            )))
        }
    };
    let (csigns, _) = binarize_class(&model.classes);
    PackedModel::new(
        dims,
        BitMatrix::from_signs(dims.m, dims.d_v, &model.value_box.lut())?,
        BitMatrix::from_signs(dims.n, dims.d, &fsigns)?,
        BitMatrix::from_signs(dims.k, dims.d, &csigns)?,
        thresholds,
    )
}

fn bitmap(bits: impl Iterator<Item = bool>, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len.div_ceil(8)];
    for (i, b) in bits.enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

impl PackedModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let Dims { n, d, d_v, m, k } = self.dims;
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        for v in [n, d, d_v, m, k] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.push(if self.thresholds.is_some() { FLAG_THRESHOLDS } else { 0 });
        out.extend(self.lut.to_bytes());
        out.extend(self.fbits.to_bytes());
        out.extend(self.cbits.to_bytes());
        if let Some(t) = &self.thresholds {
            for v in &t.theta {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend(bitmap(t.flip.iter().copied(), d));
            out.extend(bitmap(t.const_dim.iter().map(Option::is_some), d));
            out.extend(bitmap(t.const_dim.iter().map(|c| *c == Some(1)), d));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |len: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + len).ok_or(LdcError::UnexpectedEof)?;
            pos += len;
            Ok(s)
        };
        if take(4)? != MODEL_MAGIC {
            return Err(LdcError::Format("not a packed model file".into()));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().expect("2 bytes"));
        if version != MODEL_VERSION {
            return Err(LdcError::Format(format!("unsupported model file version {version}")));
        }
        let mut dim = [0usize; 5];
        for v in dim.iter_mut() {
            *v = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        }
        let [n, d, d_v, m, k] = dim;
        let dims = Dims { n, d, d_v, m, k };
        dims.validate().map_err(|e| LdcError::Format(e.to_string()))?;
        let flags = take(1)?[0];
        if flags & !FLAG_THRESHOLDS != 0 {
            return Err(LdcError::Format(format!("unknown flags {flags:#04x}")));
        }
        let lut = BitMatrix::from_bytes(m, d_v, take(m * d_v.div_ceil(8))?)?;
        let fbits = BitMatrix::from_bytes(n, d, take(n * d.div_ceil(8))?)?;
        let cbits = BitMatrix::from_bytes(k, d, take(k * d.div_ceil(8))?)?;
        let thresholds = if flags & FLAG_THRESHOLDS != 0 {
            let theta: Vec<i32> = take(4 * d)?
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let bm = d.div_ceil(8);
            let read = |b: &[u8]| -> Vec<bool> { (0..d).map(|i| b[i / 8] >> (i % 8) & 1 == 1).collect() };
            let flip = read(take(bm)?);
            let mask = read(take(bm)?);
            let sign = read(take(bm)?);
            let const_dim = mask
                .iter()
                .zip(&sign)
                .map(|(m, s)| m.then_some(if *s { 1 } else { -1 }))
                .collect();
            Some(Thresholds { theta, flip, const_dim })
        } else {
            None
        };
        if pos != bytes.len() {
            return Err(LdcError::Format(format!("{} trailing bytes", bytes.len() - pos)));
        }
        PackedModel::new(dims, lut, fbits, cbits, thresholds).map_err(|e| match e {
            LdcError::Shape(s) => LdcError::Format(s),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| LdcError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| LdcError::io(path, e))?;
        PackedModel::from_bytes(&bytes)
    }
}
