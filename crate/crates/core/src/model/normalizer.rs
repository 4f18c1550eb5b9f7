use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LdcError, Result};
use crate::nn::norm::{BatchStats, BnCache, BnLayer, LayerNorm, LayerNormCache, Mode, NormGrads, RmsNorm, RmsNormCache};
use crate::nn::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    None,
    Batch,
    Layer,
    Rms,
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::None => "none",
            NormKind::Batch => "batch",
            NormKind::Layer => "layer",
            NormKind::Rms => "rms",
        })
    }
}

impl FromStr for NormKind {
    type Err = LdcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(NormKind::None),
            "batch" | "bn" => Ok(NormKind::Batch),
            "layer" | "ln" => Ok(NormKind::Layer),
            "rms" | "rmsnorm" => Ok(NormKind::Rms),
            other => Err(LdcError::Config(format!("unknown normalizer '{other}'"))),
        }
    }
}

/// Normalization applied to the encoding accumulation before the sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalizer {
    None,
    Batch(BnLayer),
    Layer(LayerNorm),
    Rms(RmsNorm),
}

#[derive(Debug, Clone)]
pub enum NormCache {
    None,
    Batch(BnCache),
    Layer(LayerNormCache),
    Rms(RmsNormCache),
}

impl Normalizer {
    pub fn new(kind: NormKind, dim: usize) -> Self {
        match kind {
            NormKind::None => Normalizer::None,
            NormKind::Batch => Normalizer::Batch(BnLayer::new(dim)),
            NormKind::Layer => Normalizer::Layer(LayerNorm::new(dim)),
            NormKind::Rms => Normalizer::Rms(RmsNorm::new(dim)),
        }
    }

    pub fn kind(&self) -> NormKind {
        match self {
            Normalizer::None => NormKind::None,
            Normalizer::Batch(_) => NormKind::Batch,
            Normalizer::Layer(_) => NormKind::Layer,
            Normalizer::Rms(_) => NormKind::Rms,
        }
    }

    pub fn forward(&self, y: &DenseTensor, mode: Mode) -> Result<(DenseTensor, NormCache, Option<BatchStats>)> {
        Ok(match self {
            Normalizer::None => (y.clone(), NormCache::None, None),
            Normalizer::Batch(bn) => {
                let (out, cache, stats) = bn.forward_stateless(y, None, mode)?;
                (out, NormCache::Batch(cache), stats)
            }
            Normalizer::Layer(ln) => {
                let (out, cache) = ln.forward(y)?;
                (out, NormCache::Layer(cache), None)
            }
            Normalizer::Rms(rms) => {
                let (out, cache) = rms.forward(y)?;
                (out, NormCache::Rms(cache), None)
            }
        })
    }

    pub fn commit(&mut self, stats: &BatchStats) {
        if let Normalizer::Batch(bn) = self {
            bn.commit(stats);
        }
    }

    /// Input gradient plus affine gradients (empty vectors when there are no parameters).
    pub fn backward(&self, cache: &NormCache, upstream: &DenseTensor) -> Result<NormGrads> {
        match (self, cache) {
            (Normalizer::None, NormCache::None) => Ok(NormGrads {
                dx: upstream.clone(),
                dw: Vec::new(),
                db: Vec::new(),
            }),
            (Normalizer::Batch(bn), NormCache::Batch(c)) => bn.backward(c, upstream),
            (Normalizer::Layer(ln), NormCache::Layer(c)) => ln.backward(c, upstream),
            (Normalizer::Rms(rms), NormCache::Rms(c)) => rms.backward(c, upstream),
            _ => Err(LdcError::MissingCache("normalizer cache does not match the layer")),
        }
    }

    /// Trainable affine vectors `(w, b)`; `b` is absent for RMS normalization.
    pub fn params_mut(&mut self) -> Option<(&mut Vec<f64>, Option<&mut Vec<f64>>)> {
        match self {
            Normalizer::None => None,
            Normalizer::Batch(bn) => Some((&mut bn.w, Some(&mut bn.b))),
            Normalizer::Layer(ln) => Some((&mut ln.w, Some(&mut ln.b))),
            Normalizer::Rms(rms) => Some((&mut rms.w, None)),
        }
    }
}
