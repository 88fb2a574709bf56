use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::{par, rng};

/// One affine layer: `weight` is `[out, in]`, `bias` is `[out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Tensor::zeros(self.weight.shape().to_vec()),
            bias: Tensor::zeros(self.bias.shape().to_vec()),
        }
    }
}

/// Parameter gradients, laid out exactly like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            layers: net.layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }
}

/// Feedforward classifier: rectifier on hidden layers, raw logits out.
///
/// The output layer holds two logits per class, `[present, absent]`,
/// interleaved as columns `2c` and `2c + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    layer_dims: Vec<usize>,
    layers: Vec<Dense>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `inputs[l]` is the input to layer `l` (post-rectifier for l > 0).
    inputs: Vec<Tensor>,
    logits: Tensor,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Tensor {
        &self.logits
    }
}

pub fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::Config(format!(
            "need at least input and output dims, got {layer_dims:?}"
        )));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::Config(format!(
            "layer dims must be positive: {layer_dims:?}"
        )));
    }
    if layer_dims[layer_dims.len() - 1] % 2 != 0 {
        return Err(Error::Config(format!(
            "output width must be even (two logits per class): {layer_dims:?}"
        )));
    }
    Ok(())
}

impl MlpNetwork {
    /// Glorot-uniform weights, zero biases, drawn from the `init/layer{l}`
    /// streams of `seed`.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut stream = rng::stream(seed, &format!("init/layer{l}"));
                let values = (0..fan_in * fan_out)
                    .map(|_| stream.random_range(-limit..=limit))
                    .collect();
                Dense {
                    weight: Tensor::new(vec![fan_out, fan_in], values).expect("sized"),
                    bias: Tensor::zeros(vec![fan_out]),
                }
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    /// Assemble a network from explicit layers, checking that shapes chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("network needs at least one layer".into()))?;
        let mut dims = vec![first.in_dim()];
        for (l, layer) in layers.iter().enumerate() {
            if layer.weight.shape().len() != 2 || layer.bias.shape() != [layer.out_dim()] {
                return Err(Error::Shape(format!("layer {l} has malformed parameters")));
            }
            if layer.in_dim() != dims[l] {
                return Err(Error::Shape(format!(
                    "layer {l} expects {} inputs but previous layer yields {}",
                    layer.in_dim(),
                    dims[l]
                )));
            }
            dims.push(layer.out_dim());
        }
        validate_dims(&dims)?;
        Ok(Self {
            layer_dims: dims,
            layers,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_classes(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 1] / 2
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(batch)?.logits)
    }

    pub fn forward_trace(&self, batch: &Tensor) -> Result<ForwardTrace> {
        if batch.shape().len() != 2 || batch.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch shape {:?} does not match input dim {}",
                batch.shape(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = affine(&current, layer);
            if l < last {
                out.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut current, out));
        }
        Ok(ForwardTrace {
            inputs,
            logits: current,
        })
    }

    /// Gradients of `sum(logits * upstream)` with respect to every parameter.
    pub fn backward(&self, batch: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let trace = self.forward_trace(batch)?;
        self.backward_trace(&trace, upstream)
    }

    pub fn backward_trace(&self, trace: &ForwardTrace, upstream: &Tensor) -> Result<Gradients> {
        if !upstream.same_shape(&trace.logits) {
            return Err(Error::Shape(format!(
                "upstream gradient shape {:?} does not match logits {:?}",
                upstream.shape(),
                trace.logits.shape()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.inputs[l];
            grads.push(layer_grads(&delta, input, layer));
            if l > 0 {
                delta = propagate(&delta, layer, input);
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

/// `input · Wᵀ + b`, row-parallel.
fn affine(input: &Tensor, layer: &Dense) -> Tensor {
    let (rows, in_dim, out_dim) = (input.rows(), layer.in_dim(), layer.out_dim());
    let w = layer.weight.values();
    let b = layer.bias.values();
    let mut out = vec![0.0; rows * out_dim];
    par::for_each_row(&mut out, out_dim, rows * in_dim * out_dim, |r, row| {
        let x = input.row(r);
        for (o, z) in row.iter_mut().enumerate() {
            let wo = &w[o * in_dim..(o + 1) * in_dim];
            *z = b[o] + dot(wo, x);
        }
    });
    Tensor::new(vec![rows, out_dim], out).expect("sized")
}

fn layer_grads(delta: &Tensor, input: &Tensor, layer: &Dense) -> Dense {
    let (rows, in_dim, out_dim) = (input.rows(), layer.in_dim(), layer.out_dim());
    let d = delta.values();
    let mut dw = vec![0.0; out_dim * in_dim];
    par::for_each_row(&mut dw, in_dim, rows * in_dim * out_dim, |o, row| {
        for r in 0..rows {
            let g = d[r * out_dim + o];
            if g != 0.0 {
                for (acc, &x) in row.iter_mut().zip(input.row(r)) {
                    *acc += g * x;
                }
            }
        }
    });
    let mut db = vec![0.0; out_dim];
    for r in 0..rows {
        for (acc, &g) in db.iter_mut().zip(&d[r * out_dim..(r + 1) * out_dim]) {
            *acc += g;
        }
    }
    Dense {
        weight: Tensor::new(vec![out_dim, in_dim], dw).expect("sized"),
        bias: Tensor::new(vec![out_dim], db).expect("sized"),
    }
}

/// Delta for the previous layer: `(delta · W) ⊙ 1[input > 0]`.
fn propagate(delta: &Tensor, layer: &Dense, input: &Tensor) -> Tensor {
    let (rows, in_dim, out_dim) = (input.rows(), layer.in_dim(), layer.out_dim());
    let w = layer.weight.values();
    let mut out = vec![0.0; rows * in_dim];
    par::for_each_row(&mut out, in_dim, rows * in_dim * out_dim, |r, row| {
        let dr = delta.row(r);
        for (o, &g) in dr.iter().enumerate() {
            if g != 0.0 {
                for (acc, &wv) in row.iter_mut().zip(&w[o * in_dim..(o + 1) * in_dim]) {
                    *acc += g * wv;
                }
            }
        }
        for (acc, &a) in row.iter_mut().zip(input.row(r)) {
            if a <= 0.0 {
                *acc = 0.0;
            }
        }
    });
    Tensor::new(vec![rows, in_dim], out).expect("sized")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
