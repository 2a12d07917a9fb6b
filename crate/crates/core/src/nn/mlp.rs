//! Dense feed-forward networks with explicit forward and backward passes.
//!
//! Each layer computes `y = act(x · W + b)` with `W` stored as an
//! `in_dim x out_dim` row-major matrix and `b` as a `1 x out_dim` row.
//! Hidden layers use `activation`; the last layer uses `output_activation`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{axpy, gemm, DenseMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
}

/// Gradients mirroring an [`Mlp`]'s parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub owner: String,
    pub layers: Vec<LayerGrads>,
}

impl ParamGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            owner: net.name.clone(),
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weight: DenseMatrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: DenseMatrix::zeros(1, l.bias.cols()),
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.scale(factor);
            l.bias.scale(factor);
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrads) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape("layer counts differ"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.add_assign(&b.weight)?;
            a.bias.add_assign(&b.bias)?;
        }
        Ok(())
    }

    /// Parameter tensors in canonical order: per layer, weight then bias.
    pub fn tensors(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut DenseMatrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn num_params(&self) -> usize {
        self.tensors().map(DenseMatrix::len).sum()
    }

    /// Checks that every tensor has the same shape as `net`'s parameters.
    pub fn check_layout(&self, net: &Mlp) -> Result<()> {
        if self.layers.len() != net.layers.len() {
            return Err(Error::shape(format!(
                "{} has {} layers, gradients have {}",
                net.name,
                net.layers.len(),
                self.layers.len()
            )));
        }
        for (g, l) in self.layers.iter().zip(&net.layers) {
            g.weight.check_same_shape(&l.weight)?;
            g.bias.check_same_shape(&l.bias)?;
        }
        Ok(())
    }
}

/// Activations recorded by [`Mlp::forward`], consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    owner: String,
    version: u64,
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<DenseMatrix>,
    /// Pre-activation of each layer.
    pre: Vec<DenseMatrix>,
    output: DenseMatrix,
}

impl MlpCache {
    pub fn output(&self) -> &DenseMatrix {
        &self.output
    }

    /// Post-activation outputs of every layer, the last being the network output.
    pub fn activations(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.inputs[1..].iter().chain(std::iter::once(&self.output))
    }

    pub fn pre_activations(&self) -> &[DenseMatrix] {
        &self.pre
    }

    pub fn batch(&self) -> usize {
        self.output.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    name: String,
    dims: Vec<usize>,
    activation: Activation,
    output_activation: Activation,
    layers: Vec<Layer>,
    /// Bumped on every parameter mutation; caches remember the value they saw.
    version: u64,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        name: impl Into<String>,
        dims: &[usize],
        activation: Activation,
        output_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("an MLP needs at least input and output dims"));
        }
        if dims.contains(&0) {
            return Err(Error::config(format!("zero-width layer in {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Layer {
                    weight: DenseMatrix::from_vec(fan_in, fan_out, data)
                        .expect("finite init"),
                    bias: DenseMatrix::zeros(1, fan_out),
                }
            })
            .collect();
        Ok(Self {
            name: name.into(),
            dims: dims.to_vec(),
            activation,
            output_activation,
            layers,
            version: 0,
        })
    }

    /// Builds a network from explicit layers.
    pub fn from_layers(
        name: impl Into<String>,
        layers: Vec<Layer>,
        activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        let mut dims = vec![layers[0].in_dim()];
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim() != *dims.last().unwrap() {
                return Err(Error::shape(format!(
                    "layer {i} expects {} inputs, previous layer emits {}",
                    l.in_dim(),
                    dims.last().unwrap()
                )));
            }
            if l.bias.shape() != (1, l.out_dim()) {
                return Err(Error::shape(format!("layer {i} bias shape")));
            }
            dims.push(l.out_dim());
        }
        Ok(Self {
            name: name.into(),
            dims,
            activation,
            output_activation,
            layers,
            version: 0,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the layers; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn tensors(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    /// Mutable parameter tensors in canonical order; invalidates caches.
    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut DenseMatrix> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    fn layer_activation(&self, i: usize) -> Activation {
        if i + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.activation
        }
    }

    pub fn forward(&self, input: &DenseMatrix) -> Result<MlpCache> {
        if input.cols() != self.in_dim() {
            return Err(Error::shape(format!(
                "{} expects {} input columns, got {}",
                self.name,
                self.in_dim(),
                input.cols()
            )));
        }
        let batch = input.rows();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = DenseMatrix::zeros(batch, layer.out_dim());
            for r in 0..batch {
                z.row_mut(r).copy_from_slice(layer.bias.as_slice());
            }
            gemm(1.0, &current, false, &layer.weight, false, 1.0, &mut z);
            let act = self.layer_activation(i);
            let mut a = z.clone();
            if act != Activation::Identity {
                a.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            inputs.push(current);
            pre.push(z);
            current = a;
        }
        Ok(MlpCache {
            owner: self.name.clone(),
            version: self.version,
            inputs,
            pre,
            output: current,
        })
    }

    /// Gradients of a scalar loss with respect to every parameter and to the
    /// network input, given `output_grad = dL/d(output)`.
    pub fn backward(
        &self,
        cache: &MlpCache,
        output_grad: &DenseMatrix,
    ) -> Result<(ParamGrads, DenseMatrix)> {
        if cache.owner != self.name {
            return Err(Error::Cache(format!(
                "cache belongs to {}, not {}",
                cache.owner, self.name
            )));
        }
        if cache.version != self.version || cache.pre.len() != self.layers.len() {
            return Err(Error::Cache(format!(
                "{} changed since the forward pass",
                self.name
            )));
        }
        if output_grad.shape() != cache.output.shape() {
            return Err(Error::shape(format!(
                "output gradient {:?} vs output {:?}",
                output_grad.shape(),
                cache.output.shape()
            )));
        }
        let batch = cache.batch();
        let mut grads = ParamGrads::zeros_like(self);
        let mut upstream = output_grad.clone();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let act = self.layer_activation(i);
            // dL/dz
            let mut dz = upstream;
            if act != Activation::Identity {
                for (g, &z) in dz.as_mut_slice().iter_mut().zip(cache.pre[i].as_slice()) {
                    *g *= act.derivative(z);
                }
            }
            let lg = &mut grads.layers[i];
            for r in 0..batch {
                axpy(1.0, dz.row(r), lg.bias.as_mut_slice());
            }
            gemm(1.0, &cache.inputs[i], true, &dz, false, 0.0, &mut lg.weight);
            let mut dx = DenseMatrix::zeros(batch, layer.in_dim());
            gemm(1.0, &dz, false, &layer.weight, true, 0.0, &mut dx);
            upstream = dx;
        }
        Ok((grads, upstream))
    }
}
