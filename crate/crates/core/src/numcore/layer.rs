//! Dense layers: `y = activation(W x + b)`.
//!
//! Weights are row-major with shape `(out_dim, in_dim)`. All arithmetic is
//! `f64`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Softmax,
    Identity,
}

/// Logistic function, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// In-place softmax with max-subtraction.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

impl Activation {
    pub fn apply(self, pre: &[f64], out: &mut [f64]) {
        match self {
            Activation::Identity => out.copy_from_slice(pre),
            Activation::Sigmoid => {
                for (o, &z) in out.iter_mut().zip(pre) {
                    *o = sigmoid(z);
                }
            }
            Activation::Softmax => {
                out.copy_from_slice(pre);
                softmax_in_place(out);
            }
        }
    }

    /// Pulls `dy` (gradient w.r.t. the activation output `y`) back to the
    /// pre-activation, writing into `dz`.
    pub fn backprop(self, y: &[f64], dy: &[f64], dz: &mut [f64]) {
        match self {
            Activation::Identity => dz.copy_from_slice(dy),
            Activation::Sigmoid => {
                for ((d, &yi), &gi) in dz.iter_mut().zip(y).zip(dy) {
                    *d = gi * yi * (1.0 - yi);
                }
            }
            Activation::Softmax => {
                // J = diag(y) - y y^T, so J^T dy = y * (dy - <dy, y>)
                let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                for ((d, &yi), &gi) in dz.iter_mut().zip(y).zip(dy) {
                    *d = yi * (gi - dot);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "layer dimensions must be positive, got {out_dim}x{in_dim}"
            )));
        }
        if weights.len() != in_dim * out_dim {
            return Err(Error::Dimension(format!(
                "weights have {} entries, expected {}x{}",
                weights.len(),
                out_dim,
                in_dim
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::Dimension(format!(
                "bias has {} entries, expected {out_dim}",
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameters must be finite".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    /// Builds a layer from weight rows (one row per output unit).
    pub fn from_rows(rows: &[Vec<f64>], bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let out_dim = rows.len();
        let in_dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != in_dim) {
            return Err(Error::Dimension("ragged weight rows".into()));
        }
        let weights = rows.iter().flatten().copied().collect();
        Self::new(in_dim, out_dim, weights, bias, activation)
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Result<Self> {
        Self::new(
            in_dim,
            out_dim,
            vec![0.0; in_dim * out_dim],
            vec![0.0; out_dim],
            activation,
        )
    }

    /// Uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
    pub fn init_uniform<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_dim, out_dim, activation)?;
        let bound = 1.0 / (in_dim as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.random_range(-bound..=bound);
        }
        Ok(layer)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// `activation(W x + b)`, checking the input length.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::Dimension(format!(
                "input has length {}, layer expects {}",
                x.len(),
                self.in_dim
            )));
        }
        let mut out = vec![0.0; self.out_dim];
        self.forward_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked hot path; `x.len() == in_dim` and `out.len() == out_dim`.
    pub(crate) fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        for ((o, row), b) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.in_dim))
            .zip(&self.bias)
        {
            *o = dot(row, x) + b;
        }
        match self.activation {
            Activation::Identity => {}
            Activation::Sigmoid => out.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => softmax_in_place(out),
        }
    }

    /// Accumulates parameter gradients for one sample given the layer input
    /// `x`, its output `y` and the upstream gradient `dy`. When `dx` is given
    /// the gradient w.r.t. `x` is written into it.
    pub(crate) fn backward_accumulate(
        &self,
        x: &[f64],
        y: &[f64],
        dy: &[f64],
        grad: &mut LayerGrad,
        dx: Option<&mut [f64]>,
    ) {
        let mut dz = vec![0.0; self.out_dim];
        self.activation.backprop(y, dy, &mut dz);
        for ((gw_row, gb), &d) in grad
            .weights
            .chunks_exact_mut(self.in_dim)
            .zip(grad.bias.iter_mut())
            .zip(&dz)
        {
            *gb += d;
            if d != 0.0 {
                for (g, &xi) in gw_row.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = 0.0);
            for (row, &d) in self.weights.chunks_exact(self.in_dim).zip(&dz) {
                if d != 0.0 {
                    for (g, &w) in dx.iter_mut().zip(row) {
                        *g += d * w;
                    }
                }
            }
        }
    }
}

/// Dot product with four independent accumulators, so the compiler can
/// vectorize it. Summation order is fixed, so results are reproducible.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Free-function form of [`DenseLayer::forward`].
pub fn dense_forward(x: &[f64], layer: &DenseLayer) -> Result<Vec<f64>> {
    layer.forward(x)
}

/// Partial derivatives for one layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }
}
