//! Dense feed-forward networks with exact backpropagation.
//!
//! Parameters live in one flat vector. Layer `l` maps `sizes[l]` inputs to
//! `sizes[l + 1]` outputs and occupies
//!
//! ```text
//! [ weights: fan_in x fan_out, row-major (w[i * fan_out + j] connects input i to output j) | bias: fan_out ]
//! ```
//!
//! Hidden layers compute `act(norm(x W + b))`, where `norm` is the
//! parameter-free layer normalization when enabled in the [`MlpSpec`]. The
//! output layer is affine.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::norm::{layer_norm_backward_into, layer_norm_into};
use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

const LEAKY_SLOPE: f64 = 0.01;
const ELU_ALPHA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu,
    Elu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, u: T) -> T {
        match self {
            Activation::LeakyRelu => {
                if u > T::zero() {
                    u
                } else {
                    u * T::lit(LEAKY_SLOPE)
                }
            }
            Activation::Elu => {
                if u > T::zero() {
                    u
                } else {
                    T::lit(ELU_ALPHA) * (u.exp() - T::one())
                }
            }
            Activation::Identity => u,
        }
    }

    /// Derivative expressed in terms of the pre-activation `u`.
    #[inline]
    fn derivative<T: Real>(self, u: T) -> T {
        match self {
            Activation::LeakyRelu => {
                if u > T::zero() {
                    T::one()
                } else {
                    T::lit(LEAKY_SLOPE)
                }
            }
            Activation::Elu => {
                if u > T::zero() {
                    T::one()
                } else {
                    T::lit(ELU_ALPHA) * u.exp()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

/// Activation of the output layer. Only the affine output is supported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinalActivation {
    #[default]
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub final_activation: FinalActivation,
    /// Normalize hidden pre-activations (no learned scale or shift).
    #[serde(default)]
    pub layer_norm: bool,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Self {
        Self {
            layer_sizes,
            activation,
            final_activation: FinalActivation::Identity,
            layer_norm: false,
        }
    }

    pub fn with_layer_norm(mut self, on: bool) -> Self {
        self.layer_norm = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least input and output widths, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths must be positive, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_norm && self.layer_sizes[1..self.layer_sizes.len() - 1].contains(&1) {
            return Err(Error::Config(
                "layer normalization needs hidden widths of at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerShape {
    pub fn weights(&self) -> std::ops::Range<usize> {
        self.weight_offset..self.weight_offset + self.fan_in * self.fan_out
    }

    pub fn bias(&self) -> std::ops::Range<usize> {
        self.bias_offset..self.bias_offset + self.fan_out
    }
}

fn layer_shapes(spec: &MlpSpec) -> Vec<LayerShape> {
    let mut offset = 0;
    spec.layer_sizes
        .windows(2)
        .map(|w| {
            let shape = LayerShape {
                fan_in: w[0],
                fan_out: w[1],
                weight_offset: offset,
                bias_offset: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            shape
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    spec: MlpSpec,
    shapes: Vec<LayerShape>,
    params: Vec<T>,
}

/// Intermediate values of a batched forward pass, consumed by
/// [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct Tape<T> {
    batch: usize,
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<T>>,
    /// Per hidden layer: value fed to the activation (normalized if enabled).
    pre_act: Vec<Vec<T>>,
    /// Per hidden layer: per-sample inverse standard deviation when normalized.
    inv_std: Vec<Vec<T>>,
    output: Vec<T>,
}

impl<T> Tape<T> {
    pub fn output(&self) -> &[T] {
        &self.output
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Parameter gradients (same layout as the parameters) and input gradients.
#[derive(Clone, Debug)]
pub struct Backprop<T> {
    pub params: Vec<T>,
    pub input: Vec<T>,
}

impl<T: Real> Mlp<T> {
    /// Network with every parameter set to zero.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.num_params();
        Ok(Self {
            shapes: layer_shapes(&spec),
            params: vec![T::zero(); n],
            spec,
        })
    }

    pub fn from_params(spec: MlpSpec, params: Vec<T>) -> Result<Self> {
        spec.validate()?;
        check_len("mlp parameters", spec.num_params(), params.len())?;
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i} of snapshot")));
        }
        Ok(Self {
            shapes: layer_shapes(&spec),
            params,
            spec,
        })
    }

    /// Dense initialization: weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for shape in net.shapes.clone() {
            let bound = 1.0 / (shape.fan_in as f64).sqrt();
            for p in &mut net.params[shape.weight_offset..shape.bias_offset + shape.fan_out] {
                *p = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(net)
    }

    /// Sparse initialization: per output unit, exactly
    /// `ceil((1 - sparsity) * fan_in)` incoming weights are drawn from the
    /// dense initializer and the rest are zero. Biases start at zero.
    pub fn sparse_init<R: Rng + ?Sized>(spec: MlpSpec, sparsity: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..1.0).contains(&sparsity) {
            return Err(Error::Config(format!(
                "sparsity must lie in [0, 1), got {sparsity}"
            )));
        }
        let mut net = Self::zeros(spec)?;
        for shape in net.shapes.clone() {
            let keep = nonzero_count(shape.fan_in, sparsity);
            let bound = 1.0 / (shape.fan_in as f64).sqrt();
            let mut inputs: Vec<usize> = (0..shape.fan_in).collect();
            for j in 0..shape.fan_out {
                // partial Fisher-Yates picks `keep` distinct inputs uniformly
                for k in 0..keep {
                    let pick = rng.random_range(k..shape.fan_in);
                    inputs.swap(k, pick);
                }
                for &i in &inputs[..keep] {
                    let mut w = 0.0;
                    while w == 0.0 {
                        w = rng.random_range(-bound..bound);
                    }
                    net.params[shape.weight_offset + i * shape.fan_out + j] = T::lit(w);
                }
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        check_len("mlp input", self.input_dim(), input.len())?;
        Ok(self.run(input, 1, None))
    }

    /// Forward pass over `batch` row-major samples.
    pub fn forward_batch(&self, input: &[T], batch: usize) -> Result<Vec<T>> {
        check_len("mlp batch input", self.input_dim() * batch, input.len())?;
        Ok(self.run(input, batch, None))
    }

    /// Forward pass that keeps the intermediates needed for backpropagation.
    pub fn forward_tape(&self, input: &[T], batch: usize) -> Result<Tape<T>> {
        check_len("mlp batch input", self.input_dim() * batch, input.len())?;
        let mut tape = Tape {
            batch,
            inputs: Vec::with_capacity(self.shapes.len()),
            pre_act: Vec::with_capacity(self.shapes.len()),
            inv_std: Vec::with_capacity(self.shapes.len()),
            output: Vec::new(),
        };
        tape.output = self.run(input, batch, Some(&mut tape));
        Ok(tape)
    }

    fn run(&self, input: &[T], batch: usize, mut tape: Option<&mut Tape<T>>) -> Vec<T> {
        let last = self.shapes.len() - 1;
        let mut x = input.to_vec();
        for (l, shape) in self.shapes.iter().enumerate() {
            let mut z = affine(
                &x,
                batch,
                shape.fan_in,
                &self.params[shape.weights()],
                &self.params[shape.bias()],
            );
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(std::mem::take(&mut x));
            }
            if l == last {
                x = z;
                break;
            }
            let mut inv_std = Vec::new();
            if self.spec.layer_norm {
                inv_std.reserve(batch);
                for row in z.chunks_exact_mut(shape.fan_out) {
                    inv_std.push(layer_norm_into(row));
                }
            }
            let h: Vec<T> = z.iter().map(|&u| self.spec.activation.apply(u)).collect();
            if let Some(t) = tape.as_deref_mut() {
                t.pre_act.push(std::mem::take(&mut z));
                t.inv_std.push(inv_std);
            }
            x = h;
        }
        x
    }

    /// Exact gradients of `sum(output * output_grad)` with respect to every
    /// parameter and every input, summed over the batch held in `tape`.
    pub fn backward(&self, tape: &Tape<T>, output_grad: &[T]) -> Result<Backprop<T>> {
        check_len(
            "mlp output gradient",
            self.output_dim() * tape.batch,
            output_grad.len(),
        )?;
        let batch = tape.batch;
        let mut grads = vec![T::zero(); self.params.len()];
        let mut delta = output_grad.to_vec();
        for (l, shape) in self.shapes.iter().enumerate().rev() {
            let x = &tape.inputs[l];
            let (gw, gb) = grads[shape.weight_offset..shape.bias_offset + shape.fan_out]
                .split_at_mut(shape.fan_in * shape.fan_out);
            for r in 0..batch {
                let d = &delta[r * shape.fan_out..(r + 1) * shape.fan_out];
                let xr = &x[r * shape.fan_in..(r + 1) * shape.fan_in];
                for (gb, &dv) in gb.iter_mut().zip(d) {
                    *gb = *gb + dv;
                }
                for (i, &xi) in xr.iter().enumerate() {
                    let row = &mut gw[i * shape.fan_out..(i + 1) * shape.fan_out];
                    for (g, &dv) in row.iter_mut().zip(d) {
                        *g = *g + xi * dv;
                    }
                }
            }
            let w = &self.params[shape.weights()];
            let mut dx = vec![T::zero(); batch * shape.fan_in];
            for r in 0..batch {
                let d = &delta[r * shape.fan_out..(r + 1) * shape.fan_out];
                for i in 0..shape.fan_in {
                    dx[r * shape.fan_in + i] =
                        dot(d, &w[i * shape.fan_out..(i + 1) * shape.fan_out]);
                }
            }
            if l > 0 {
                // dx is the gradient w.r.t. the previous hidden layer's activation
                let prev = l - 1;
                let u = &tape.pre_act[prev];
                for (g, &uv) in dx.iter_mut().zip(u) {
                    *g = *g * self.spec.activation.derivative(uv);
                }
                if self.spec.layer_norm {
                    let width = self.shapes[prev].fan_out;
                    for (r, (g, y)) in dx
                        .chunks_exact_mut(width)
                        .zip(u.chunks_exact(width))
                        .enumerate()
                    {
                        layer_norm_backward_into(g, y, tape.inv_std[prev][r]);
                    }
                }
            }
            delta = dx;
        }
        Ok(Backprop {
            params: grads,
            input: delta,
        })
    }
}

/// `x W + b` for each row of `x`.
fn affine<T: Real>(x: &[T], batch: usize, fan_in: usize, w: &[T], b: &[T]) -> Vec<T> {
    let fan_out = b.len();
    let mut out = Vec::with_capacity(batch * fan_out);
    for r in 0..batch {
        let start = out.len();
        out.extend_from_slice(b);
        let acc = &mut out[start..];
        for (i, &xi) in x[r * fan_in..(r + 1) * fan_in].iter().enumerate() {
            let wr = &w[i * fan_out..(i + 1) * fan_out];
            for (a, &wv) in acc.iter_mut().zip(wr) {
                *a = *a + xi * wv;
            }
        }
    }
    out
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] = acc[0] + x[0] * y[0];
        acc[1] = acc[1] + x[1] * y[1];
        acc[2] = acc[2] + x[2] * y[2];
        acc[3] = acc[3] + x[3] * y[3];
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = tail + x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Number of nonzero incoming weights per unit under sparse initialization.
pub fn nonzero_count(fan_in: usize, sparsity: f64) -> usize {
    let raw = (1.0 - sparsity) * fan_in as f64;
    // absorb representation error, e.g. (1 - 0.9) * 10 = 0.9999999999999998
    ((raw - 1e-9).ceil() as usize).clamp(1, fan_in)
}
