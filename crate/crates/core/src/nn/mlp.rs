use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_init, Binding, Module, NnError};
use crate::mathcore::{Array2, NodeId, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Tanh,
}

/// Fully connected network with tanh hidden layers.
///
/// The optional `output_scale` multiplies the final activation; the actor
/// uses it to map `tanh` outputs onto the action bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Array2>,
    biases: Vec<Array2>,
    output: Activation,
    output_scale: f64,
}

impl Mlp {
    /// Layers of `sizes = [in, h1, ..., out]`, weights and biases uniform in
    /// `±1/sqrt(fan_in)`.
    pub fn new(sizes: &[usize], output: Activation, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            weights.push(uniform_init(w[0], w[1], bound, rng));
            biases.push(uniform_init(1, w[1], bound, rng));
        }
        Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            output,
            output_scale: 1.0,
        }
    }

    /// Network with explicit layer parameters; shapes must chain.
    pub fn from_layers(
        layers: Vec<(Array2, Array2)>,
        output: Activation,
    ) -> Result<Self, NnError> {
        let mut sizes = Vec::new();
        for (i, (w, b)) in layers.iter().enumerate() {
            if i == 0 {
                sizes.push(w.rows());
            } else if w.rows() != sizes[i] {
                return Err(NnError::Length(format!(
                    "layer {i} expects {} inputs, previous layer gives {}",
                    w.rows(),
                    sizes[i]
                )));
            }
            if b.shape() != (1, w.cols()) {
                return Err(NnError::TensorShape {
                    name: format!("b{i}"),
                    expected: (1, w.cols()),
                    found: b.shape(),
                });
            }
            sizes.push(w.cols());
        }
        if sizes.is_empty() {
            return Err(NnError::Length("no layers".into()));
        }
        let (weights, biases) = layers.into_iter().unzip();
        Ok(Self {
            sizes,
            weights,
            biases,
            output,
            output_scale: 1.0,
        })
    }

    /// Re-draws the last layer uniformly in `±bound`, so outputs start near zero.
    pub fn with_final_layer_init(mut self, bound: f64, rng: &mut impl Rng) -> Self {
        let last = self.weights.len() - 1;
        let (r, c) = self.weights[last].shape();
        self.weights[last] = uniform_init(r, c, bound, rng);
        self.biases[last] = uniform_init(1, c, bound, rng);
        self
    }

    pub fn with_output_scale(mut self, scale: f64) -> Self {
        self.output_scale = scale;
        self
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    /// Batched forward pass recorded on `tape`.
    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: NodeId) -> Result<NodeId, NnError> {
        let mut h = x;
        let layers = self.weights.len();
        for l in 0..layers {
            let z = tape.matmul(h, bind.id(2 * l))?;
            let z = tape.add(z, bind.id(2 * l + 1))?;
            h = if l + 1 < layers || self.output == Activation::Tanh {
                tape.tanh(z)?
            } else {
                z
            };
        }
        if self.output_scale != 1.0 {
            h = tape.scale(h, self.output_scale)?;
        }
        Ok(h)
    }

    /// Forward pass without recording; bit-identical to [`Mlp::forward`].
    pub fn eval(&self, x: &Array2) -> Result<Array2, NnError> {
        let mut h = x.clone();
        let layers = self.weights.len();
        for l in 0..layers {
            let z = h.matmul(&self.weights[l])?.add_broadcast(&self.biases[l])?;
            h = if l + 1 < layers || self.output == Activation::Tanh {
                z.map(f64::tanh)
            } else {
                z
            };
        }
        if self.output_scale != 1.0 {
            h = h.scale(self.output_scale);
        }
        Ok(h)
    }

    /// Single-sample convenience wrapper over [`Mlp::eval`].
    pub fn eval_row(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.eval(&Array2::row(x))?.into_data())
    }
}

impl Module for Mlp {
    fn named_tensors(&self) -> Vec<(String, &Array2)> {
        let mut out = Vec::new();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("w{l}"), w));
            out.push((format!("b{l}"), b));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }
}
