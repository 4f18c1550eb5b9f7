use ndarray::Axis;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::DenseTensor;
use crate::error::{LdcError, Result};

/// Input retained by [`linear_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LinearCache {
    pub input: DenseTensor,
}

/// Gradients of a linear layer.
#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub dx: DenseTensor,
    pub dw: DenseTensor,
    pub db: Vec<f64>,
}

/// `y = x W^T + b` for `x: batch x in`, `W: out x in`.
pub fn linear_forward(x: &DenseTensor, w: &DenseTensor, b: &[f64]) -> Result<(DenseTensor, LinearCache)> {
    if x.cols() != w.cols() || b.len() != w.rows() {
        return Err(LdcError::Shape(format!(
            "linear: x {:?}, W {:?}, b {}",
            x.shape(),
            w.shape(),
            b.len()
        )));
    }
    let mut y = x.view().dot(&w.view().t());
    for mut row in y.axis_iter_mut(Axis(0)) {
        for (v, bias) in row.iter_mut().zip(b) {
            *v += bias;
        }
    }
    let y = DenseTensor::from_array(y);
    y.check_finite("linear output")?;
    Ok((y, LinearCache { input: x.clone() }))
}

pub fn linear_backward(cache: &LinearCache, w: &DenseTensor, upstream: &DenseTensor) -> Result<LinearGrads> {
    let x = &cache.input;
    if upstream.rows() != x.rows() || upstream.cols() != w.rows() {
        return Err(LdcError::Shape(format!(
            "linear backward: upstream {:?} for x {:?}, W {:?}",
            upstream.shape(),
            x.shape(),
            w.shape()
        )));
    }
    let up = upstream.view();
    let dx = DenseTensor::from_array(up.dot(&w.view()));
    let dw = DenseTensor::from_array(up.t().dot(&x.view()));
    let db = up.sum_axis(Axis(0)).to_vec();
    Ok(LinearGrads { dx, dw, db })
}

/// A dense layer with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: DenseTensor,
    pub bias: Vec<f64>,
}

impl Linear {
    /// Uniform `[-a, a]` initialization with `a = 1/sqrt(fan_in)` for weights and biases.
    pub fn init_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let a = 1.0 / (fan_in as f64).sqrt();
        let weight = (0..fan_in * fan_out).map(|_| rng.random_range(-a..=a)).collect();
        let bias = (0..fan_out).map(|_| rng.random_range(-a..=a)).collect();
        Linear {
            weight: DenseTensor::from_vec(fan_out, fan_in, weight).expect("sized"),
            bias,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &DenseTensor) -> Result<(DenseTensor, LinearCache)> {
        linear_forward(x, &self.weight, &self.bias)
    }

    pub fn backward(&self, cache: &LinearCache, upstream: &DenseTensor) -> Result<LinearGrads> {
        linear_backward(cache, &self.weight, upstream)
    }
}
