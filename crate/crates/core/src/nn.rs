//! Fully-connected networks shared by the dynamics model and neural policies.
//!
//! Parameters are stored flat. The flattening order is layer-major; within a
//! layer the weight matrix comes first in row-major order (one row per output
//! unit), followed by the bias vector. Posterior and policy files rely on this
//! order, so it must not change.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Deserialize)]
struct RawArchitecture {
    layer_widths: Vec<usize>,
    activation: Activation,
}

/// Layer widths from input to output. Hidden layers use `activation`; the
/// output layer is always linear.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawArchitecture")]
pub struct Architecture {
    layer_widths: Vec<usize>,
    activation: Activation,
}

impl TryFrom<RawArchitecture> for Architecture {
    type Error = Error;

    fn try_from(raw: RawArchitecture) -> Result<Self> {
        Architecture::new(raw.layer_widths, raw.activation)
    }
}

impl Architecture {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::invalid("an architecture needs at least input and output widths"));
        }
        if layer_widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(Self { layer_widths, activation })
    }

    /// `input → hidden… → output`, all hidden layers sharing one activation.
    pub fn mlp(input: usize, hidden: &[usize], output: usize, activation: Activation) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        Self::new(widths, activation)
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    /// Number of affine maps.
    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    /// `(fan_in, fan_out)` of affine map `i`.
    pub fn layer_dims(&self, i: usize) -> (usize, usize) {
        (self.layer_widths[i], self.layer_widths[i + 1])
    }

    pub fn n_params(&self) -> usize {
        (0..self.n_layers())
            .map(|i| {
                let (fi, fo) = self.layer_dims(i);
                fi * fo + fo
            })
            .sum()
    }

    /// Offsets of layer `i`'s weight block and bias block in the flat vector.
    pub fn layer_offsets(&self, i: usize) -> (usize, usize) {
        let start: usize = (0..i)
            .map(|j| {
                let (fi, fo) = self.layer_dims(j);
                fi * fo + fo
            })
            .sum();
        let (fi, fo) = self.layer_dims(i);
        (start, start + fi * fo)
    }

    pub fn is_hidden(&self, layer: usize) -> bool {
        layer + 1 < self.n_layers()
    }
}

/// A concrete parameterisation of an [`Architecture`].
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet {
    params: Vec<f64>,
}

impl WeightSet {
    pub fn zeros(arch: &Architecture) -> Self {
        Self { params: vec![0.0; arch.n_params()] }
    }

    /// Builds a weight set from per-layer `(weights, bias)` pairs, weights
    /// given row-major with one row per output unit.
    pub fn from_layers(arch: &Architecture, layers: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        if layers.len() != arch.n_layers() {
            return Err(Error::invalid(format!("expected {} layers, got {}", arch.n_layers(), layers.len())));
        }
        let mut params = Vec::with_capacity(arch.n_params());
        for (i, (w, b)) in layers.iter().enumerate() {
            let (fi, fo) = arch.layer_dims(i);
            if w.len() != fi * fo || b.len() != fo {
                return Err(Error::invalid(format!("layer {i}: expected {fo}x{fi} weights and {fo} biases")));
            }
            params.extend_from_slice(w);
            params.extend_from_slice(b);
        }
        Ok(Self { params })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params.clone()
    }

    pub fn unflatten(arch: &Architecture, v: &[f64]) -> Result<Self> {
        if v.len() != arch.n_params() {
            return Err(Error::invalid(format!(
                "parameter vector has length {}, architecture needs {}",
                v.len(),
                arch.n_params()
            )));
        }
        Ok(Self { params: v.to_vec() })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Weight matrix and bias of layer `i`.
    pub fn layer<'a>(&'a self, arch: &Architecture, i: usize) -> (&'a [f64], &'a [f64]) {
        let (w_off, b_off) = arch.layer_offsets(i);
        let (_, fo) = arch.layer_dims(i);
        (&self.params[w_off..b_off], &self.params[b_off..b_off + fo])
    }

    pub fn check(&self, arch: &Architecture) -> Result<()> {
        if self.params.len() != arch.n_params() {
            return Err(Error::invalid(format!(
                "weight set has {} parameters, architecture needs {}",
                self.params.len(),
                arch.n_params()
            )));
        }
        Ok(())
    }
}

/// Reusable buffers for allocation-free forward passes.
#[derive(Default, Debug, Clone)]
pub struct ForwardScratch {
    cur: Vec<f64>,
    next: Vec<f64>,
}

/// Forward pass over a raw parameter slice. Shapes are not checked.
pub fn forward_with<'s>(arch: &Architecture, params: &[f64], x: &[f64], scratch: &'s mut ForwardScratch) -> &'s [f64] {
    scratch.cur.clear();
    scratch.cur.extend_from_slice(x);
    let act = arch.activation();
    for layer in 0..arch.n_layers() {
        let (fi, fo) = arch.layer_dims(layer);
        let (w_off, b_off) = arch.layer_offsets(layer);
        let w = &params[w_off..b_off];
        let b = &params[b_off..b_off + fo];
        scratch.next.clear();
        for j in 0..fo {
            let row = &w[j * fi..(j + 1) * fi];
            let mut acc = b[j];
            for i in 0..fi {
                acc += row[i] * scratch.cur[i];
            }
            scratch.next.push(acc);
        }
        if arch.is_hidden(layer) {
            for v in scratch.next.iter_mut() {
                *v = act.apply(*v);
            }
        }
        std::mem::swap(&mut scratch.cur, &mut scratch.next);
    }
    &scratch.cur
}

pub fn forward(arch: &Architecture, w: &WeightSet, x: &[f64]) -> Result<Vec<f64>> {
    w.check(arch)?;
    if x.len() != arch.input_dim() {
        return Err(Error::invalid(format!("input has length {}, network expects {}", x.len(), arch.input_dim())));
    }
    let mut scratch = ForwardScratch::default();
    Ok(forward_with(arch, w.params(), x, &mut scratch).to_vec())
}

/// Intermediate values of one forward pass, kept for reverse-mode gradients.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `values[0]` is the input, `values[l + 1]` the output of affine map `l`
    /// after its activation.
    values: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.values.last().unwrap()
    }
}

pub fn forward_tape(arch: &Architecture, params: &[f64], x: &[f64]) -> Tape {
    let mut values = Vec::with_capacity(arch.n_layers() + 1);
    let mut pre = Vec::with_capacity(arch.n_layers());
    values.push(x.to_vec());
    let act = arch.activation();
    for layer in 0..arch.n_layers() {
        let (fi, fo) = arch.layer_dims(layer);
        let (w_off, b_off) = arch.layer_offsets(layer);
        let input = values.last().unwrap();
        let z: Vec<f64> = (0..fo)
            .map(|j| {
                let row = &params[w_off + j * fi..w_off + (j + 1) * fi];
                let mut acc = params[b_off + j];
                for i in 0..fi {
                    acc += row[i] * input[i];
                }
                acc
            })
            .collect();
        let out = if arch.is_hidden(layer) { z.iter().map(|&v| act.apply(v)).collect() } else { z.clone() };
        pre.push(z);
        values.push(out);
    }
    Tape { values, pre }
}

/// Accumulates `∂(grad_out · f(x))/∂params` into `grad_params`, and writes the
/// input gradient into `grad_input` when requested.
pub fn backward(
    arch: &Architecture,
    params: &[f64],
    tape: &Tape,
    grad_out: &[f64],
    grad_params: &mut [f64],
    grad_input: Option<&mut [f64]>,
) {
    let act = arch.activation();
    let mut delta = grad_out.to_vec();
    for layer in (0..arch.n_layers()).rev() {
        let (fi, fo) = arch.layer_dims(layer);
        let (w_off, b_off) = arch.layer_offsets(layer);
        if arch.is_hidden(layer) {
            let z = &tape.pre[layer];
            let a = &tape.values[layer + 1];
            for j in 0..fo {
                delta[j] *= act.derivative(z[j], a[j]);
            }
        }
        let input = &tape.values[layer];
        for j in 0..fo {
            let d = delta[j];
            if d == 0.0 {
                continue;
            }
            let row = &mut grad_params[w_off + j * fi..w_off + (j + 1) * fi];
            for i in 0..fi {
                row[i] += d * input[i];
            }
            grad_params[b_off + j] += d;
        }
        if layer > 0 || grad_input.is_some() {
            let mut prev = vec![0.0; fi];
            for j in 0..fo {
                let d = delta[j];
                let row = &params[w_off + j * fi..w_off + (j + 1) * fi];
                for i in 0..fi {
                    prev[i] += d * row[i];
                }
            }
            delta = prev;
        }
    }
    if let Some(gi) = grad_input {
        gi.copy_from_slice(&delta);
    }
}

/// Zero-mean prior variances: twice the Glorot variance `2 / (fan_in + fan_out)`
/// for every weight and bias of a layer.
pub fn glorot_prior(arch: &Architecture) -> Vec<f64> {
    let mut var = Vec::with_capacity(arch.n_params());
    for layer in 0..arch.n_layers() {
        let (fi, fo) = arch.layer_dims(layer);
        let v = 2.0 * 2.0 / (fi + fo) as f64;
        var.extend(std::iter::repeat_n(v, fi * fo + fo));
    }
    var
}
