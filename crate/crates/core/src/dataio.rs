//! Dataset loading, feature discretization and deterministic batching.
//!
//! Two on-disk formats are understood:
//!
//! - IDX (big-endian, magic `0x00000803` for images, `0x00000801` for labels),
//!   optionally gzip-compressed, used for FashionMNIST.
//! - Delimited numeric text (comma and/or whitespace separated), one sample per
//!   row, label in the last column, used for the 1-D signal datasets.
//!
//! Features are discretized into `M` levels with per-feature min-max statistics
//! fitted on the training split only; test values outside the training range are
//! clamped.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LdcError, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Default number of discretization levels.
pub const DEFAULT_LEVELS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A discretized classification dataset split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    /// Row-major `len() x n_features` matrix of levels in `[0, n_levels)`.
    pub features: Vec<u16>,
    pub labels: Vec<usize>,
    pub n_features: usize,
    pub n_levels: usize,
    pub n_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<u16>,
        labels: Vec<usize>,
        n_features: usize,
        n_levels: usize,
        n_classes: usize,
        split: Split,
    ) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            features,
            labels,
            n_features,
            n_levels,
            n_classes,
            split,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u16] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.n_classes == 0 || self.n_levels < 2 {
            return Err(LdcError::Format(format!(
                "degenerate dataset dims: N={}, K={}, M={}",
                self.n_features, self.n_classes, self.n_levels
            )));
        }
        if self.n_levels > u16::MAX as usize + 1 {
            return Err(LdcError::Format(format!("too many levels: {}", self.n_levels)));
        }
        if self.features.len() != self.labels.len() * self.n_features {
            return Err(LdcError::CountMismatch {
                what: "feature rows vs labels".into(),
                expected: self.labels.len() * self.n_features,
                found: self.features.len(),
            });
        }
        if let Some(&q) = self.features.iter().find(|&&q| q as usize >= self.n_levels) {
            return Err(LdcError::Format(format!(
                "feature level {q} outside [0, {})",
                self.n_levels
            )));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.n_classes) {
            return Err(LdcError::Format(format!(
                "label {l} outside [0, {})",
                self.n_classes
            )));
        }
        Ok(())
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            name: self.name.clone(),
            features,
            labels,
            n_features: self.n_features,
            n_levels: self.n_levels,
            n_classes: self.n_classes,
            split: self.split,
        }
    }

    /// The first `n` rows (or all of them when `n >= len()`).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

/// Known benchmark datasets plus a catch-all for arbitrary delimited files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetId {
    FashionMnist,
    Isolet,
    Har,
    ChbMit,
    CreditCard,
    /// Delimited files without declared sizes.
    Custom,
}

/// Declared `(N, train, test, K)` for a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeclaredSizes {
    pub n_features: usize,
    pub train: usize,
    pub test: usize,
    pub n_classes: usize,
}

impl DatasetId {
    pub fn declared(self) -> Option<DeclaredSizes> {
        let (n_features, train, test, n_classes) = match self {
            DatasetId::FashionMnist => (784, 60000, 10000, 10),
            DatasetId::Isolet => (617, 6238, 1559, 26),
            DatasetId::Har => (561, 7352, 2947, 6),
            DatasetId::ChbMit => (1472, 13920, 664, 2),
            DatasetId::CreditCard => (29, 3940, 196, 2),
            DatasetId::Custom => return None,
        };
        Some(DeclaredSizes {
            n_features,
            train,
            test,
            n_classes,
        })
    }

    pub fn is_idx(self) -> bool {
        self == DatasetId::FashionMnist
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            DatasetId::FashionMnist => "fashion_mnist",
            DatasetId::Isolet => "isolet",
            DatasetId::Har => "har",
            DatasetId::ChbMit => "chb_mit",
            DatasetId::CreditCard => "creditcard",
            DatasetId::Custom => "custom",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl FromStr for DatasetId {
    type Err = LdcError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "fashionmnist" | "fmnist" => DatasetId::FashionMnist,
            "isolet" => DatasetId::Isolet,
            "har" | "ucihar" => DatasetId::Har,
            "chbmit" => DatasetId::ChbMit,
            "creditcard" | "creditfraud" => DatasetId::CreditCard,
            "custom" => DatasetId::Custom,
            _ => return Err(LdcError::Config(format!("unknown dataset '{s}'"))),
        })
    }
}

/// File locations for one dataset. IDX datasets use `[images, labels]` per split;
/// delimited datasets use one or more files per split, concatenated in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

impl DatasetPaths {
    /// Conventional layout below a data root:
    ///
    /// - `fashion_mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]`
    /// - `isolet/isolet1+2+3+4.data` and `isolet/isolet5.data` if present,
    ///   otherwise `isolet/{train,test}.csv`
    /// - `<dir>/{train,test}.csv` for the other delimited datasets.
    pub fn under_root(id: DatasetId, root: &Path) -> DatasetPaths {
        let dir = root.join(id.dir_name());
        if id.is_idx() {
            let pick = |stem: &str| {
                let plain = dir.join(stem);
                let gz = dir.join(format!("{stem}.gz"));
                if !plain.exists() && gz.exists() {
                    gz
                } else {
                    plain
                }
            };
            return DatasetPaths {
                train: vec![pick("train-images-idx3-ubyte"), pick("train-labels-idx1-ubyte")],
                test: vec![pick("t10k-images-idx3-ubyte"), pick("t10k-labels-idx1-ubyte")],
            };
        }
        if id == DatasetId::Isolet {
            let orig_train = dir.join("isolet1+2+3+4.data");
            let orig_test = dir.join("isolet5.data");
            if orig_train.exists() || orig_test.exists() {
                return DatasetPaths {
                    train: vec![orig_train],
                    test: vec![orig_test],
                };
            }
        }
        DatasetPaths {
            train: vec![dir.join("train.csv")],
            test: vec![dir.join("test.csv")],
        }
    }
}

/// Per-feature min-max statistics used for discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl QuantStats {
    /// Fits per-column min/max on a row-major `rows x cols` matrix.
    pub fn fit(raw: &[f64], cols: usize) -> Result<QuantStats> {
        if cols == 0 || !raw.len().is_multiple_of(cols) {
            return Err(LdcError::Shape(format!(
                "{} values do not form rows of {cols}",
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(LdcError::NonFinite("raw features".into()));
        }
        let mut min = vec![f64::INFINITY; cols];
        let mut max = vec![f64::NEG_INFINITY; cols];
        for row in raw.chunks_exact(cols) {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        if raw.is_empty() {
            min.fill(0.0);
            max.fill(0.0);
        }
        Ok(QuantStats { min, max })
    }

    /// Fixed range `[lo, hi]` for every one of `cols` features.
    pub fn fixed(cols: usize, lo: f64, hi: f64) -> QuantStats {
        QuantStats {
            min: vec![lo; cols],
            max: vec![hi; cols],
        }
    }

    /// Maps each value to `floor((x - min) / (max - min) * (M - 1) + 0.5)`,
    /// clamped to `[0, M-1]`; constant features map to 0.
    pub fn apply(&self, raw: &[f64], levels: usize) -> Result<Vec<u16>> {
        let cols = self.min.len();
        if levels < 2 || levels > u16::MAX as usize + 1 {
            return Err(LdcError::Config(format!("levels must be in [2, 65536], got {levels}")));
        }
        if cols == 0 || !raw.len().is_multiple_of(cols) {
            return Err(LdcError::Shape(format!(
                "{} values do not form rows of {cols}",
                raw.len()
            )));
        }
        let top = (levels - 1) as f64;
        let mut out = Vec::with_capacity(raw.len());
        for row in raw.chunks_exact(cols) {
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(LdcError::NonFinite("raw features".into()));
                }
                let range = self.max[j] - self.min[j];
                let q = if range > 0.0 {
                    ((x - self.min[j]) / range * top + 0.5).floor().clamp(0.0, top)
                } else {
                    0.0
                };
                out.push(q as u16);
            }
        }
        Ok(out)
    }
}

/// Discretizes a row-major matrix with statistics taken from the matrix itself.
pub fn quantize_features(raw: &[f64], cols: usize, levels: usize) -> Result<Vec<u16>> {
    if levels < 2 {
        return Err(LdcError::Config(format!("levels must be >= 2, got {levels}")));
    }
    QuantStats::fit(raw, cols)?.apply(raw, levels)
}

/// A delimited numeric table: features plus the label column.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub cols: usize,
    pub values: Vec<f64>,
    pub labels: Vec<f64>,
}

impl RawTable {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }
}

fn open(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| LdcError::io(path, e))?;
    let reader = BufReader::new(file);
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(reader)))
    } else {
        Ok(Box::new(reader))
    }
}

/// Reads delimited numeric rows (comma and/or whitespace), label last.
/// Blank lines and lines starting with `#` are skipped.
pub fn read_delimited(path: &Path) -> Result<RawTable> {
    let reader = BufReader::new(open(path)?);
    let mut cols = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| LdcError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() < 2 {
            return Err(LdcError::Format(format!(
                "{}:{}: need at least one feature and a label",
                path.display(),
                lineno + 1
            )));
        }
        let n = fields.len() - 1;
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(LdcError::Format(format!(
                    "{}:{}: expected {} features, found {}",
                    path.display(),
                    lineno + 1,
                    c,
                    n
                )))
            }
            _ => {}
        }
        for (j, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| {
                LdcError::Format(format!(
                    "{}:{}: '{}' is not a number",
                    path.display(),
                    lineno + 1,
                    f
                ))
            })?;
            if j < n {
                values.push(v);
            } else {
                labels.push(v);
            }
        }
    }
    let cols = cols.ok_or_else(|| LdcError::Format(format!("{}: no data rows", path.display())))?;
    Ok(RawTable {
        cols,
        values,
        labels,
    })
}

fn read_u32_be(r: &mut dyn Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| LdcError::UnexpectedEof)?;
    Ok(u32::from_be_bytes(buf))
}

/// IDX image file: `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut r = open(path)?;
    let magic = read_u32_be(&mut r)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(LdcError::Format(format!(
            "{}: bad IDX image magic {magic:#010x}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut r)? as usize;
    let rows = read_u32_be(&mut r)? as usize;
    let cols = read_u32_be(&mut r)? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    r.read_exact(&mut pixels).map_err(|_| LdcError::UnexpectedEof)?;
    Ok((count, rows, cols, pixels))
}

/// IDX label file.
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = open(path)?;
    let magic = read_u32_be(&mut r)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(LdcError::Format(format!(
            "{}: bad IDX label magic {magic:#010x}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut r)? as usize;
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels).map_err(|_| LdcError::UnexpectedEof)?;
    Ok(labels)
}

fn check_count(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(LdcError::CountMismatch {
            what: what.into(),
            expected,
            found,
        });
    }
    Ok(())
}

fn load_idx_split(
    id: DatasetId,
    files: &[PathBuf],
    levels: usize,
    split: Split,
) -> Result<Dataset> {
    if files.len() != 2 {
        return Err(LdcError::Config(format!(
            "{id}: IDX splits need [images, labels], got {} paths",
            files.len()
        )));
    }
    let (count, rows, cols, pixels) = read_idx_images(&files[0])?;
    let labels = read_idx_labels(&files[1])?;
    check_count("IDX label count vs image count", count, labels.len())?;
    let n_features = rows * cols;
    // Pixels are already discrete on the fixed range [0, 255].
    let raw: Vec<f64> = pixels.iter().map(|&p| p as f64).collect();
    let features = QuantStats::fixed(n_features, 0.0, 255.0).apply(&raw, levels)?;
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let n_classes = id
        .declared()
        .map(|d| d.n_classes)
        .unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    Dataset::new(id.to_string(), features, labels, n_features, levels, n_classes, split)
}

fn read_tables(files: &[PathBuf]) -> Result<RawTable> {
    let mut out: Option<RawTable> = None;
    for f in files {
        let t = read_delimited(f)?;
        match out.as_mut() {
            None => out = Some(t),
            Some(acc) => {
                check_count("feature columns across files", acc.cols, t.cols)?;
                acc.values.extend(t.values);
                acc.labels.extend(t.labels);
            }
        }
    }
    out.ok_or_else(|| LdcError::Config("no files given for split".into()))
}

/// Maps raw label values onto `0..K` by sorted order of the distinct training labels.
fn label_codebook(train: &[f64]) -> Result<Vec<f64>> {
    let mut distinct: Vec<f64> = Vec::new();
    for &l in train {
        if !l.is_finite() || l.fract() != 0.0 {
            return Err(LdcError::Format(format!("label {l} is not an integer")));
        }
        distinct.push(l);
    }
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    Ok(distinct)
}

fn encode_labels(raw: &[f64], book: &[f64]) -> Result<Vec<usize>> {
    raw.iter()
        .map(|l| {
            book.iter()
                .position(|b| b == l)
                .ok_or_else(|| LdcError::Format(format!("label {l} does not occur in the training split")))
        })
        .collect()
}

/// Loads and discretizes both splits of a dataset.
///
/// For benchmarks with declared sizes a mismatch in feature count, split size or
/// class count is a hard error.
pub fn load_dataset(id: DatasetId, paths: &DatasetPaths, levels: usize) -> Result<(Dataset, Dataset)> {
    if levels < 2 || levels > u16::MAX as usize + 1 {
        return Err(LdcError::Config(format!("levels must be in [2, 65536], got {levels}")));
    }
    let (train, test) = if id.is_idx() {
        (
            load_idx_split(id, &paths.train, levels, Split::Train)?,
            load_idx_split(id, &paths.test, levels, Split::Test)?,
        )
    } else {
        let raw_train = read_tables(&paths.train)?;
        let raw_test = read_tables(&paths.test)?;
        check_count("test feature columns vs train", raw_train.cols, raw_test.cols)?;
        let stats = QuantStats::fit(&raw_train.values, raw_train.cols)?;
        let book = label_codebook(&raw_train.labels)?;
        let n_classes = book.len();
        let make = |t: &RawTable, split| -> Result<Dataset> {
            Dataset::new(
                id.to_string(),
                stats.apply(&t.values, levels)?,
                encode_labels(&t.labels, &book)?,
                t.cols,
                levels,
                n_classes,
                split,
            )
        };
        (make(&raw_train, Split::Train)?, make(&raw_test, Split::Test)?)
    };
    if let Some(decl) = id.declared() {
        check_count(&format!("{id} feature count"), decl.n_features, train.n_features)?;
        check_count(&format!("{id} train samples"), decl.train, train.len())?;
        check_count(&format!("{id} test samples"), decl.test, test.len())?;
        check_count(&format!("{id} classes"), decl.n_classes, train.n_classes)?;
    }
    Ok((train, test))
}

/// Sample order for one epoch: Fisher-Yates over `0..n` driven by a ChaCha
/// stream keyed by `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Splits an epoch order into consecutive batches. A trailing batch smaller than
/// `min_batch` is dropped.
pub fn batches(order: &[usize], batch_size: usize, min_batch: usize) -> Vec<&[usize]> {
    order
        .chunks(batch_size.max(1))
        .filter(|c| c.len() >= min_batch)
        .collect()
}
