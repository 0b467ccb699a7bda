//! Minimal differentiable building blocks: dense layers with a fixed set of
//! activations, explicit forward/backward over cached batches, and SGD with
//! momentum. Gradients are verified against central finite differences in
//! the test suite.

pub mod loss;
mod sgd;

pub use loss::{confusion_bce, sigmoid_bce, sigmoid_bce_const, softmax_cross_entropy, LossKind};
pub use sgd::Sgd;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    /// Row-wise softmax; only meaningful as a final layer.
    Softmax,
}

impl Activation {
    fn apply(self, m: &mut Matrix) {
        match self {
            Activation::Identity => {}
            Activation::Relu => {
                for v in m.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            Activation::Sigmoid => {
                for v in m.data_mut() {
                    *v = math::sigmoid(*v);
                }
            }
            Activation::Softmax => {
                for r in 0..m.rows() {
                    let row = m.row_mut(r);
                    let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = math::exp(*v - max);
                        sum += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= sum;
                    }
                }
            }
        }
    }

    /// Pulls a gradient w.r.t. post-activation values `dy` back to the
    /// pre-activation, given the cached post-activation values `y`.
    fn backprop(self, y: &Matrix, dy: &Matrix) -> Matrix {
        assert_eq!(y.rows(), dy.rows());
        assert_eq!(y.cols(), dy.cols());
        match self {
            Activation::Identity => dy.clone(),
            Activation::Relu => {
                let mut dz = dy.clone();
                for (g, &v) in dz.data_mut().iter_mut().zip(y.data()) {
                    if v <= 0.0 {
                        *g = 0.0;
                    }
                }
                dz
            }
            Activation::Sigmoid => {
                let mut dz = dy.clone();
                for (g, &s) in dz.data_mut().iter_mut().zip(y.data()) {
                    *g *= s * (1.0 - s);
                }
                dz
            }
            Activation::Softmax => {
                // dz_i = y_i (dy_i - Σ_k dy_k y_k), per row.
                let mut dz = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let dr = dy.row(r);
                    let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                    for c in 0..y.cols() {
                        dz.set(r, c, yr[c] * (dr[c] - dot));
                    }
                }
                dz
            }
        }
    }
}

/// A learnable buffer: values, gradient and momentum velocity of equal
/// length. Gradient and velocity are rebuilt as zeros on deserialization;
/// checkpoints carry shapes and values only.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "repr::ParamTensorRepr", into = "repr::ParamTensorRepr"))]
pub struct ParamTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
    velocity: Vec<f64>,
}

impl ParamTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Self {
        let len: usize = shape.iter().product();
        assert_eq!(values.len(), len, "value length does not match shape");
        ParamTensor {
            shape,
            grad: vec![0.0; len],
            velocity: vec![0.0; len],
            values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grad {
            *g = 0.0;
        }
    }

    fn accumulate(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.grad.len());
        for (a, b) in self.grad.iter_mut().zip(g) {
            *a += b;
        }
    }

    /// v ← momentum·v − lr·g;  w ← w + v;  g ← 0.
    fn sgd_update(&mut self, lr: f64, momentum: f64) {
        for ((w, v), g) in self
            .values
            .iter_mut()
            .zip(&mut self.velocity)
            .zip(&mut self.grad)
        {
            *v = momentum * *v - lr * *g;
            *w += *v;
            *g = 0.0;
        }
    }

    fn max_abs_finite_grad(&self) -> f64 {
        // f64::max ignores NaN operands, so this stays meaningful even when
        // the buffer holds NaNs.
        self.grad.iter().map(|g| math::abs(*g)).fold(0.0, f64::max)
    }

    fn grads_finite(&self) -> bool {
        self.grad.iter().all(|g| g.is_finite())
    }
}

#[cfg(feature = "serde")]
mod repr {
    use super::ParamTensor;
    use alloc::vec;
    use alloc::vec::Vec;

    #[derive(serde::Serialize, serde::Deserialize)]
    pub struct ParamTensorRepr {
        shape: Vec<usize>,
        values: Vec<f64>,
    }

    impl From<ParamTensorRepr> for ParamTensor {
        fn from(r: ParamTensorRepr) -> Self {
            ParamTensor::new(r.shape, r.values)
        }
    }

    impl From<ParamTensor> for ParamTensorRepr {
        fn from(t: ParamTensor) -> Self {
            ParamTensorRepr {
                shape: t.shape,
                values: t.values,
            }
        }
    }

    #[allow(unused)]
    fn _assert_shapes(t: &ParamTensor) {
        let _ = vec![&t.grad];
    }
}

/// Dense layer `y = act(x·W + b)`; `W` is `in_dim × out_dim` row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseLayer {
    pub weights: ParamTensor,
    pub bias: ParamTensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Self {
        assert_eq!(weights.cols(), bias.len(), "bias width mismatch");
        let shape = vec![weights.rows(), weights.cols()];
        let w = ParamTensor::new(shape, weights.data().to_vec());
        let b_len = bias.len();
        DenseLayer {
            weights: w,
            bias: ParamTensor::new(vec![b_len], bias),
            activation,
        }
    }

    /// Glorot-uniform weights in ±sqrt(6/(fan_in+fan_out)), zero bias.
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = math::sqrt(6.0 / (in_dim + out_dim) as f64);
        let values: Vec<f64> = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        DenseLayer {
            weights: ParamTensor::new(vec![in_dim, out_dim], values),
            bias: ParamTensor::new(vec![out_dim], vec![0.0; out_dim]),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    fn weight_matrix(&self) -> Matrix {
        Matrix::from_vec(self.in_dim(), self.out_dim(), self.weights.values().to_vec())
    }

    fn affine(&self, x: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(x.rows(), self.out_dim());
        let w = self.weights.values();
        let out_dim = self.out_dim();
        for r in 0..x.rows() {
            let xr = x.row(r);
            let zr = z.row_mut(r);
            for (k, &a) in xr.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let wrow = &w[k * out_dim..(k + 1) * out_dim];
                for (o, b) in zr.iter_mut().zip(wrow) {
                    *o += a * b;
                }
            }
        }
        z.add_row(self.bias.values());
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BatchCache {
    /// Input fed to each layer (index 0 is the network input).
    inputs: Vec<Matrix>,
    /// Post-activation output of each layer.
    outputs: Vec<Matrix>,
}

/// A feed-forward net: ordered dense layers, with a per-batch cache for
/// backpropagation. `forward` caches, `infer` does not and is safe to call
/// on a shared reference.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    #[cfg_attr(feature = "serde", serde(skip))]
    cache: Option<BatchCache>,
}

impl Mlp {
    /// Builds a net from explicit layer sizes: `dims = [in, h1, ..., out]`
    /// with one activation per layer.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::InvalidConfig(alloc::format!(
                "need one activation per layer: {} dims, {} activations",
                dims.len(),
                activations.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig("zero-width layer".into()));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &a)| DenseLayer::init(w[0], w[1], a, rng))
            .collect();
        Ok(Mlp {
            layers,
            cache: None,
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network with no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::DimensionMismatch {
                    what: "consecutive layer dims",
                    expected: pair[0].out_dim(),
                    got: pair[1].in_dim(),
                });
            }
        }
        Ok(Mlp {
            layers,
            cache: None,
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "batch width",
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// Forward pass without caching; usable through a shared reference.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            let mut z = layer.affine(&cur);
            layer.activation.apply(&mut z);
            cur = z;
        }
        Ok(cur)
    }

    /// Forward pass that caches per-layer inputs and outputs for `backward`.
    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let mut z = layer.affine(&cur);
            layer.activation.apply(&mut z);
            inputs.push(cur);
            outputs.push(z.clone());
            cur = z;
        }
        self.cache = Some(BatchCache { inputs, outputs });
        Ok(cur)
    }

    /// Backward pass from a gradient w.r.t. the final layer's
    /// *pre-activation* logits (the form produced by the fused losses).
    /// Accumulates into every parameter's grad and returns the gradient
    /// w.r.t. the network input.
    pub fn backward_from_logits(&mut self, grad: &Matrix) -> Result<Matrix> {
        self.backward_impl(grad, true)
    }

    /// Backward pass from a gradient w.r.t. the final *post-activation*
    /// output (the form that arrives from a downstream network).
    pub fn backward_from_output(&mut self, grad: &Matrix) -> Result<Matrix> {
        self.backward_impl(grad, false)
    }

    fn backward_impl(&mut self, grad: &Matrix, from_logits: bool) -> Result<Matrix> {
        let cache = self.cache.as_ref().ok_or(Error::BackwardBeforeForward)?;
        let last = self.layers.len() - 1;
        check_grad_shape(grad, &cache.outputs[last])?;

        let mut delta = if from_logits {
            grad.clone()
        } else {
            self.layers[last]
                .activation
                .backprop(&cache.outputs[last], grad)
        };
        for l in (0..self.layers.len()).rev() {
            let dw = cache.inputs[l].matmul_at(&delta);
            let db = delta.col_sums();
            let dx = delta.matmul_bt(&self.layers[l].weight_matrix());
            self.layers[l].weights.accumulate(dw.data());
            self.layers[l].bias.accumulate(&db);
            if l == 0 {
                return Ok(dx);
            }
            delta = self.layers[l - 1]
                .activation
                .backprop(&cache.outputs[l - 1], &dx);
        }
        unreachable!()
    }

    /// Gradient w.r.t. the network input for a frozen net: reads the cache
    /// from the last `forward` but writes no parameter gradients.
    pub fn input_grad_from_logits(&self, grad: &Matrix) -> Result<Matrix> {
        let cache = self.cache.as_ref().ok_or(Error::BackwardBeforeForward)?;
        let last = self.layers.len() - 1;
        check_grad_shape(grad, &cache.outputs[last])?;

        let mut delta = grad.clone();
        for l in (0..self.layers.len()).rev() {
            let dx = delta.matmul_bt(&self.layers[l].weight_matrix());
            if l == 0 {
                return Ok(dx);
            }
            delta = self.layers[l - 1]
                .activation
                .backprop(&cache.outputs[l - 1], &dx);
        }
        unreachable!()
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.weights.zero_grad();
            layer.bias.zero_grad();
        }
    }

    /// Flat copy of all parameter values, layer by layer (weights then
    /// bias). Used by freeze-contract checks and checkpoint tests.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.values());
            out.extend_from_slice(layer.bias.values());
        }
        out
    }
}

fn check_grad_shape(grad: &Matrix, out: &Matrix) -> Result<()> {
    if grad.rows() != out.rows() || grad.cols() != out.cols() {
        return Err(Error::DimensionMismatch {
            what: "loss gradient shape",
            expected: out.rows() * out.cols(),
            got: grad.rows() * grad.cols(),
        });
    }
    Ok(())
}
