//! Dense-array reverse-mode automatic differentiation.
//!
//! Values are computed eagerly as operations are recorded on a [`Tape`];
//! [`Tape::backward`] then walks the record in reverse to produce gradients
//! for every node the scalar loss depends on.

mod array;
mod gradcheck;
mod tape;

pub use array::Array2;
pub use gradcheck::{finite_diff_check, finite_diff_check_many};
pub use tape::{Gradients, NodeId, OpKind, Tape};

pub(crate) use tape::sigmoid;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MathError {
    #[error("{op}: incompatible shapes {shapes:?}")]
    Shape {
        op: &'static str,
        shapes: Vec<(usize, usize)>,
    },
    #[error("cannot build a {rows}x{cols} array from {len} values")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("column slice {start}..{end} out of range for {cols} columns")]
    Slice { start: usize, end: usize, cols: usize },
    #[error("{op} expects {expected} inputs, got {found}")]
    Arity {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("node {0} is not on this tape")]
    UnknownNode(usize),
    #[error("backward requires a 1x1 loss, got {shape:?}")]
    NotScalar { shape: (usize, usize) },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
}
