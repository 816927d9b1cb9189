use serde::{Deserialize, Serialize};

use super::{matvec, matvec_t_acc, outer_acc, sigmoid, ParameterBlock};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    #[default]
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Values kept from a dense forward pass for its backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub output: Vec<f64>,
    pub activation: Activation,
}

fn dense_dims(w: &ParameterBlock, b: &ParameterBlock) -> Result<(usize, usize)> {
    if w.shape.len() != 2 {
        return Err(Error::shape("dense weight rank", 2, w.shape.len()));
    }
    let (rows, cols) = (w.shape[0], w.shape[1]);
    if b.len() != rows {
        return Err(Error::shape("dense bias length", rows, b.len()));
    }
    Ok((rows, cols))
}

/// `activation(W·x + b)` with `W` of shape `(out, in)`.
pub fn dense_forward(
    w: &ParameterBlock,
    b: &ParameterBlock,
    x: &[f64],
    activation: Activation,
) -> Result<(Vec<f64>, DenseCache)> {
    let (rows, cols) = dense_dims(w, b)?;
    if x.len() != cols {
        return Err(Error::shape("dense input length", cols, x.len()));
    }
    let mut pre = vec![0.0; rows];
    matvec(&w.values, rows, cols, x, &mut pre);
    for (p, bias) in pre.iter_mut().zip(&b.values) {
        *p += bias;
    }
    let output: Vec<f64> = pre.iter().map(|&p| activation.apply(p)).collect();
    let cache = DenseCache {
        input: x.to_vec(),
        pre,
        output: output.clone(),
        activation,
    };
    Ok((output, cache))
}

/// Accumulates weight and bias gradients and returns the gradient with
/// respect to the layer input.
pub fn dense_backward(
    w: &ParameterBlock,
    cache: &DenseCache,
    d_out: &[f64],
    grad_w: &mut ParameterBlock,
    grad_b: &mut ParameterBlock,
) -> Result<Vec<f64>> {
    let rows = cache.pre.len();
    let cols = cache.input.len();
    if d_out.len() != rows {
        return Err(Error::shape("dense output gradient", rows, d_out.len()));
    }
    if grad_w.len() != rows * cols || grad_b.len() != rows {
        return Err(Error::shape("dense gradient block", rows * cols, grad_w.len()));
    }
    let d_pre: Vec<f64> = d_out
        .iter()
        .zip(cache.pre.iter().zip(&cache.output))
        .map(|(&g, (&x, &y))| g * cache.activation.derivative(x, y))
        .collect();
    outer_acc(&mut grad_w.values, &d_pre, &cache.input);
    for (gb, d) in grad_b.values.iter_mut().zip(&d_pre) {
        *gb += d;
    }
    let mut d_in = vec![0.0; cols];
    matvec_t_acc(&w.values, rows, cols, &d_pre, &mut d_in);
    Ok(d_in)
}
