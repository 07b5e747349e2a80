use super::{Array2, MathError};

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds a tape can record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    /// Elementwise sum; the second input may be a bias row broadcast over rows.
    Add,
    Sub,
    MulElem,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Neg,
    Sum,
    Mean,
    ConcatCols,
    SliceCols { start: usize, end: usize },
    Scale(f64),
    Square,
    /// Elementwise clamp; gradient passes only strictly inside the bounds.
    Clamp { lo: f64, hi: f64 },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::MulElem => "mul_elem",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Neg => "neg",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::ConcatCols => "concat_cols",
            OpKind::SliceCols { .. } => "slice_cols",
            OpKind::Scale(_) => "scale",
            OpKind::Square => "square",
            OpKind::Clamp { .. } => "clamp",
        }
    }

    fn arity(&self) -> usize {
        match self {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::MulElem | OpKind::ConcatCols => 2,
            _ => 1,
        }
    }
}

#[derive(Debug)]
enum Origin {
    Leaf,
    Op { kind: OpKind, inputs: [usize; 2] },
}

#[derive(Debug)]
struct Node {
    origin: Origin,
    value: Array2,
    requires_grad: bool,
}

/// Linear record of eagerly evaluated operations.
///
/// Inputs always precede the nodes that reference them, so a single reverse
/// sweep in insertion order is a valid topological traversal.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`, if the loss depends on it.
    pub fn get(&self, id: NodeId) -> Option<&Array2> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but returns zeros of `shape` for untouched nodes.
    pub fn get_or_zeros(&self, id: NodeId, shape: (usize, usize)) -> Array2 {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(shape.0, shape.1))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable leaf (a parameter or an input we want gradients for).
    pub fn param(&mut self, value: Array2) -> NodeId {
        self.push(Origin::Leaf, value, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Array2) -> NodeId {
        self.push(Origin::Leaf, value, false)
    }

    pub fn value(&self, id: NodeId) -> &Array2 {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, origin: Origin, value: Array2, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            origin,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Records `kind` applied to `inputs` and evaluates it immediately.
    pub fn apply(&mut self, kind: OpKind, inputs: &[NodeId]) -> Result<NodeId, MathError> {
        if inputs.len() != kind.arity() {
            return Err(MathError::Arity {
                op: kind.name(),
                expected: kind.arity(),
                found: inputs.len(),
            });
        }
        if let Some(bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(MathError::UnknownNode(bad.0));
        }
        let a = &self.nodes[inputs[0].0].value;
        let b = inputs.get(1).map(|id| &self.nodes[id.0].value);
        let value = match kind {
            OpKind::MatMul => a.matmul(b.unwrap())?,
            OpKind::Add => a.add_broadcast(b.unwrap())?,
            OpKind::Sub => a.zip_map(b.unwrap(), "sub", |x, y| x - y)?,
            OpKind::MulElem => a.zip_map(b.unwrap(), "mul_elem", |x, y| x * y)?,
            OpKind::Tanh => a.map(f64::tanh),
            OpKind::Sigmoid => a.map(sigmoid),
            OpKind::Exp => {
                let out = a.map(f64::exp);
                if !out.all_finite() {
                    return Err(MathError::NonFinite { op: "exp" });
                }
                out
            }
            OpKind::Log => {
                if a.data().iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                    return Err(MathError::NonFinite { op: "log" });
                }
                a.map(f64::ln)
            }
            OpKind::Neg => a.map(|v| -v),
            OpKind::Sum => Array2::scalar(a.sum()),
            OpKind::Mean => Array2::scalar(a.mean()),
            OpKind::ConcatCols => a.concat_cols(b.unwrap())?,
            OpKind::SliceCols { start, end } => a.slice_cols(start, end)?,
            OpKind::Scale(f) => a.scale(f),
            OpKind::Square => a.map(|v| v * v),
            OpKind::Clamp { lo, hi } => a.map(|v| v.clamp(lo, hi)),
        };
        let requires_grad = inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        let mut ids = [inputs[0].0; 2];
        if let Some(second) = inputs.get(1) {
            ids[1] = second.0;
        }
        Ok(self.push(
            Origin::Op {
                kind,
                inputs: ids,
            },
            value,
            requires_grad,
        ))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, MathError> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, MathError> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, MathError> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, MathError> {
        self.apply(OpKind::MulElem, &[a, b])
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, MathError> {
        self.apply(OpKind::Tanh, &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, MathError> {
        self.apply(OpKind::Sigmoid, &[a])
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId, MathError> {
        self.apply(OpKind::Exp, &[a])
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId, MathError> {
        self.apply(OpKind::Log, &[a])
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId, MathError> {
        self.apply(OpKind::Neg, &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, MathError> {
        self.apply(OpKind::Sum, &[a])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, MathError> {
        self.apply(OpKind::Mean, &[a])
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, MathError> {
        self.apply(OpKind::ConcatCols, &[a, b])
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId, MathError> {
        self.apply(OpKind::SliceCols { start, end }, &[a])
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, MathError> {
        self.apply(OpKind::Scale(factor), &[a])
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId, MathError> {
        self.apply(OpKind::Square, &[a])
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId, MathError> {
        self.apply(OpKind::Clamp { lo, hi }, &[a])
    }

    /// Reverse sweep from a scalar `loss`; d(loss)/d(loss) = 1.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, MathError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(MathError::NotScalar { shape });
        }
        let mut grads: Vec<Option<Array2>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Origin::Op { kind, inputs } = node.origin {
                let a_id = inputs[0];
                let b_id = inputs[1];
                let wants_a = self.nodes[a_id].requires_grad;
                let wants_b = kind.arity() == 2 && self.nodes[b_id].requires_grad;
                let a = &self.nodes[a_id].value;
                let out = &node.value;
                match kind {
                    OpKind::MatMul => {
                        let b = &self.nodes[b_id].value;
                        if wants_a {
                            accumulate(&mut grads, a_id, upstream.matmul_nt(b)?)?;
                        }
                        if wants_b {
                            accumulate(&mut grads, b_id, a.matmul_tn(&upstream)?)?;
                        }
                    }
                    OpKind::Add | OpKind::Sub => {
                        let b_shape = self.nodes[b_id].value.shape();
                        if wants_b {
                            let gb = if b_shape == upstream.shape() {
                                upstream.clone()
                            } else {
                                upstream.sum_rows()
                            };
                            let gb = if kind == OpKind::Sub { gb.scale(-1.0) } else { gb };
                            accumulate(&mut grads, b_id, gb)?;
                        }
                        if wants_a {
                            accumulate(&mut grads, a_id, upstream.clone())?;
                        }
                    }
                    OpKind::MulElem => {
                        let b = &self.nodes[b_id].value;
                        if wants_a {
                            accumulate(&mut grads, a_id, upstream.zip_map(b, "mul_elem", |g, y| g * y)?)?;
                        }
                        if wants_b {
                            accumulate(&mut grads, b_id, upstream.zip_map(a, "mul_elem", |g, x| g * x)?)?;
                        }
                    }
                    OpKind::Tanh => {
                        if wants_a {
                            accumulate(&mut grads, a_id, upstream.zip_map(out, "tanh", |g, y| g * (1.0 - y * y))?)?;
                        }
                    }
                    OpKind::Sigmoid => {
                        if wants_a {
                            accumulate(&mut grads, a_id, upstream.zip_map(out, "sigmoid", |g, y| g * y * (1.0 - y))?)?;
                        }
                    }
                    OpKind::Exp => {
                        if wants_a {
                            accumulate(&mut grads, a_id, upstream.zip_map(out, "exp", |g, y| g * y)?)?;
                        }
                    }
                    OpKind::Log => {
                        if wants_a {
                            accumulate(&mut grads, a_id, upstream.zip_map(a, "log", |g, x| g / x)?)?;
                        }
                    }
                    OpKind::Neg => {
                        if wants_a {
                            accumulate(&mut grads, a_id, upstream.scale(-1.0))?;
                        }
                    }
                    OpKind::Sum => {
                        if wants_a {
                            let (r, c) = a.shape();
                            accumulate(&mut grads, a_id, Array2::filled(r, c, upstream.item()))?;
                        }
                    }
                    OpKind::Mean => {
                        if wants_a {
                            let (r, c) = a.shape();
                            let g = upstream.item() / (r * c) as f64;
                            accumulate(&mut grads, a_id, Array2::filled(r, c, g))?;
                        }
                    }
                    OpKind::ConcatCols => {
                        let split = a.cols();
                        if wants_a {
                            accumulate(&mut grads, a_id, upstream.slice_cols(0, split)?)?;
                        }
                        if wants_b {
                            accumulate(&mut grads, b_id, upstream.slice_cols(split, upstream.cols())?)?;
                        }
                    }
                    OpKind::SliceCols { start, end } => {
                        if wants_a {
                            let mut g = Array2::zeros(a.rows(), a.cols());
                            for r in 0..a.rows() {
                                for (c, &v) in upstream.row_slice(r).iter().enumerate() {
                                    g.set(r, start + c, v);
                                }
                            }
                            debug_assert_eq!(end - start, upstream.cols());
                            accumulate(&mut grads, a_id, g)?;
                        }
                    }
                    OpKind::Scale(f) => {
                        if wants_a {
                            accumulate(&mut grads, a_id, upstream.scale(f))?;
                        }
                    }
                    OpKind::Square => {
                        if wants_a {
                            accumulate(&mut grads, a_id, upstream.zip_map(a, "square", |g, x| 2.0 * g * x)?)?;
                        }
                    }
                    OpKind::Clamp { lo, hi } => {
                        if wants_a {
                            let g = upstream.zip_map(a, "clamp", |g, x| if x > lo && x < hi { g } else { 0.0 })?;
                            accumulate(&mut grads, a_id, g)?;
                        }
                    }
                }
            }
            grads[idx] = Some(upstream);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Array2>], id: usize, g: Array2) -> Result<(), MathError> {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
