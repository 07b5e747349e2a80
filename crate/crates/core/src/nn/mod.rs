//! Neural building blocks on top of [`crate::mathcore`].

mod adam;
mod gaussian;
mod io;
mod lstm;
mod mlp;

use std::collections::BTreeMap;

use rand::Rng;

use crate::mathcore::{Array2, Gradients, MathError, NodeId, Tape};

pub use adam::{Adam, AdamConfig};
pub use gaussian::{gaussian_nll, gaussian_nll_node, GaussianHead, LOG_STD_MAX, LOG_STD_MIN};
pub use io::{load_params, save_params, ModelFile, ModelMeta, TensorRecord};
pub use lstm::{Lstm, LstmNodes, LstmState};
pub use mlp::{Activation, Mlp};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("tensor `{0}` missing from parameter set")]
    MissingTensor(String),
    #[error("tensor `{name}`: expected shape {expected:?}, found {found:?}")]
    TensorShape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("standard deviation must be positive, got {0}")]
    NonPositiveStd(f64),
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("optimizer: {0}")]
    Optimizer(String),
    #[error("model file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file format: {0}")]
    Format(#[from] serde_json::Error),
}

/// Named parameter tensors keyed by name.
pub type NamedTensors = BTreeMap<String, Array2>;

/// Anything owning trainable tensors in a fixed order.
pub trait Module {
    /// Tensors with stable names, in the same order as [`Module::tensors_mut`].
    fn named_tensors(&self) -> Vec<(String, &Array2)>;

    fn tensors_mut(&mut self) -> Vec<&mut Array2>;

    fn tensors(&self) -> Vec<&Array2> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    fn to_named(&self) -> NamedTensors {
        self.named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect()
    }

    /// Replaces every tensor from `src`; nothing is modified on error.
    fn load_tensors(&mut self, src: &NamedTensors) -> Result<(), NnError> {
        let mut staged = Vec::new();
        for (name, current) in self.named_tensors() {
            let found = src
                .get(&name)
                .ok_or_else(|| NnError::MissingTensor(name.clone()))?;
            if found.shape() != current.shape() {
                return Err(NnError::TensorShape {
                    name,
                    expected: current.shape(),
                    found: found.shape(),
                });
            }
            staged.push(found.clone());
        }
        for (dst, value) in self.tensors_mut().into_iter().zip(staged) {
            *dst = value;
        }
        Ok(())
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Node ids of a module's tensors placed on a tape.
#[derive(Clone, Debug)]
pub struct Binding {
    ids: Vec<NodeId>,
    shapes: Vec<(usize, usize)>,
}

impl Binding {
    /// Places the tensors of `module` on `tape`. Frozen bindings are
    /// recorded as constants and receive no gradients.
    pub fn new(tape: &mut Tape, module: &impl Module, trainable: bool) -> Self {
        let mut ids = Vec::new();
        let mut shapes = Vec::new();
        for t in module.tensors() {
            shapes.push(t.shape());
            ids.push(if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            });
        }
        Self { ids, shapes }
    }

    /// Wraps tensors already on `tape`, in module order.
    pub fn from_nodes(tape: &Tape, ids: &[NodeId]) -> Self {
        Self {
            ids: ids.to_vec(),
            shapes: ids.iter().map(|&id| tape.shape(id)).collect(),
        }
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> NodeId {
        self.ids[i]
    }

    /// Gradients of the bound tensors, zeros where the loss did not reach.
    pub fn grads(&self, grads: &Gradients) -> Vec<Array2> {
        self.ids
            .iter()
            .zip(&self.shapes)
            .map(|(&id, &shape)| grads.get_or_zeros(id, shape))
            .collect()
    }
}

/// Uniform initialization in `[-bound, bound]`.
pub fn uniform_init(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Array2 {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Array2::new(rows, cols, data).expect("positive dims")
}

/// Polyak averaging `target <- rate * online + (1 - rate) * target`.
pub fn soft_update(target: &mut impl Module, online: &impl Module, rate: f64) {
    let sources: Vec<Array2> = online.tensors().into_iter().cloned().collect();
    for (dst, src) in target.tensors_mut().into_iter().zip(&sources) {
        for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
            *d = if rate == 1.0 { *s } else { *d + rate * (s - *d) };
        }
    }
}
