//! Dense rectifier networks with manual backpropagation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fully connected layer; `weights` is `output x input`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dense<T> {
    pub input: usize,
    pub output: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            input,
            output,
            weights: vec![T::zero(); input * output],
            bias: vec![T::zero(); output],
        }
    }

    fn apply(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(self.bias.iter().copied());
        for (o, acc) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.input..(o + 1) * self.input];
            let mut sum = T::zero();
            for (&w, &xi) in row.iter().zip(x) {
                sum += w * xi;
            }
            *acc += sum;
        }
    }
}

/// Layer stack with a rectifier between consecutive layers and a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MlpParams<T> {
    layers: Vec<Dense<T>>,
}

/// Activations recorded by [`MlpParams::forward_traced`]; reusable across calls.
#[derive(Clone, Debug, Default)]
pub struct Trace<T> {
    /// `activations[0]` is the input, `activations[l]` the (rectified) input of layer `l`,
    /// and the last entry is the linear output.
    activations: Vec<Vec<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().map_or(&[], Vec::as_slice)
    }
}

impl<T: Scalar> MlpParams<T> {
    /// All-zero network with the given layer widths, input first.
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "an MLP needs an input and an output width");
        Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// He-normal weights, zero biases.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(dims);
        for layer in &mut net.layers {
            let std = (2.0 / layer.input.max(1) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            for w in &mut layer.weights {
                *w = T::of(normal.sample(rng));
            }
        }
        net
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].output != w[1].input {
                return Err(Error::Shape {
                    context: "adjacent MLP layers",
                    expected: w[0].output,
                    actual: w[1].input,
                });
            }
        }
        for l in &layers {
            if l.weights.len() != l.input * l.output || l.bias.len() != l.output {
                return Err(Error::Shape {
                    context: "MLP layer parameters",
                    expected: l.input * l.output,
                    actual: l.weights.len(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.output))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// A zero-valued network of the same shape, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.dims())
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v = T::zero());
        }
    }

    /// Parameter tensors in a fixed order: weights then bias, layer by layer.
    pub fn slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                context: "MLP input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut trace = Trace::default();
        self.forward_traced(x, &mut trace);
        Ok(trace.output().to_vec())
    }

    /// Forward pass recording activations. Input width is not checked.
    pub fn forward_traced(&self, x: &[T], trace: &mut Trace<T>) {
        let n = self.layers.len() + 1;
        trace.activations.resize_with(n, Vec::new);
        trace.activations[0].clear();
        trace.activations[0].extend_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = trace.activations.split_at_mut(l + 1);
            let out = &mut rest[0];
            layer.apply(&done[l], out);
            if l + 1 < self.layers.len() {
                for v in out.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
        }
    }

    /// Accumulates parameter gradients of a traced pass into `grads` and returns the
    /// gradient with respect to the input.
    pub fn backward(&self, trace: &Trace<T>, d_output: &[T], grads: &mut Self) -> Vec<T> {
        let mut delta = d_output.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.activations[l];
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.input..(o + 1) * layer.input];
                for (gw, &xi) in row.iter_mut().zip(input) {
                    *gw += d * xi;
                }
            }
            let mut d_input = vec![T::zero(); layer.input];
            for (o, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                let row = &layer.weights[o * layer.input..(o + 1) * layer.input];
                for (di, &w) in d_input.iter_mut().zip(row) {
                    *di += d * w;
                }
            }
            if l > 0 {
                // rectifier derivative, taken as zero at the kink
                for (di, &a) in d_input.iter_mut().zip(input) {
                    if a <= T::zero() {
                        *di = T::zero();
                    }
                }
            }
            delta = d_input;
        }
        delta
    }

    /// `self += alpha * other`, shapes assumed equal.
    pub fn add_scaled(&mut self, other: &Self, alpha: T) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weights.iter_mut().zip(&b.weights) {
                *x += alpha * y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x += alpha * y;
            }
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= alpha);
        }
    }
}
