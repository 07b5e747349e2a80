use rand::Rng;

use super::{uniform_init, Binding, Module, NnError};
use crate::mathcore::{sigmoid, Array2, NodeId, Tape};

/// Single-layer LSTM.
///
/// Gate pre-activations are packed column-wise as `[i | f | o | g]`:
/// `z = x W + h U + b`, with `W: in×4H`, `U: H×4H`, `b: 1×4H`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    input: usize,
    hidden: usize,
    w: Array2,
    u: Array2,
    b: Array2,
}

/// Recurrent state for a batch of sequences (`B×H` each).
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Array2,
    pub c: Array2,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            h: Array2::zeros(batch, hidden),
            c: Array2::zeros(batch, hidden),
        }
    }
}

/// Recurrent state living on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LstmNodes {
    pub h: NodeId,
    pub c: NodeId,
}

impl Lstm {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            input,
            hidden,
            w: uniform_init(input, 4 * hidden, bound, rng),
            u: uniform_init(hidden, 4 * hidden, bound, rng),
            b: uniform_init(1, 4 * hidden, bound, rng),
        }
    }

    pub fn zeroed(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w: Array2::zeros(input, 4 * hidden),
            u: Array2::zeros(hidden, 4 * hidden),
            b: Array2::zeros(1, 4 * hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn bias_mut(&mut self) -> &mut Array2 {
        &mut self.b
    }

    pub fn initial_nodes(&self, tape: &mut Tape, batch: usize) -> LstmNodes {
        LstmNodes {
            h: tape.constant(Array2::zeros(batch, self.hidden)),
            c: tape.constant(Array2::zeros(batch, self.hidden)),
        }
    }

    /// One recorded step; returns the new state (its `h` is the step output).
    pub fn step(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        x: NodeId,
        state: LstmNodes,
    ) -> Result<LstmNodes, NnError> {
        let hd = self.hidden;
        let zx = tape.matmul(x, bind.id(0))?;
        let zh = tape.matmul(state.h, bind.id(1))?;
        let z = tape.add(zx, zh)?;
        let z = tape.add(z, bind.id(2))?;
        let zi = tape.slice_cols(z, 0, hd)?;
        let zf = tape.slice_cols(z, hd, 2 * hd)?;
        let zo = tape.slice_cols(z, 2 * hd, 3 * hd)?;
        let zg = tape.slice_cols(z, 3 * hd, 4 * hd)?;
        let i = tape.sigmoid(zi)?;
        let f = tape.sigmoid(zf)?;
        let o = tape.sigmoid(zo)?;
        let g = tape.tanh(zg)?;
        let fc = tape.mul_elem(f, state.c)?;
        let ig = tape.mul_elem(i, g)?;
        let c = tape.add(fc, ig)?;
        let tc = tape.tanh(c)?;
        let h = tape.mul_elem(o, tc)?;
        Ok(LstmNodes { h, c })
    }

    /// Plain evaluation of one step; a pure function of its arguments.
    pub fn step_eval(&self, x: &Array2, state: &LstmState) -> Result<LstmState, NnError> {
        let hd = self.hidden;
        let z = x
            .matmul(&self.w)?
            .add_broadcast(&state.h.matmul(&self.u)?)?
            .add_broadcast(&self.b)?;
        if state.c.shape() != (x.rows(), hd) {
            return Err(NnError::Length(format!(
                "cell state shape {:?} does not match batch {} x hidden {hd}",
                state.c.shape(),
                x.rows()
            )));
        }
        let rows = x.rows();
        let mut h = Array2::zeros(rows, hd);
        let mut c = Array2::zeros(rows, hd);
        for r in 0..rows {
            let zr = z.row_slice(r);
            for k in 0..hd {
                let i = sigmoid(zr[k]);
                let f = sigmoid(zr[hd + k]);
                let o = sigmoid(zr[2 * hd + k]);
                let g = zr[3 * hd + k].tanh();
                let cn = f * state.c.get(r, k) + i * g;
                c.set(r, k, cn);
                h.set(r, k, o * cn.tanh());
            }
        }
        Ok(LstmState { h, c })
    }
}

impl Module for Lstm {
    fn named_tensors(&self) -> Vec<(String, &Array2)> {
        vec![
            ("w".into(), &self.w),
            ("u".into(), &self.u),
            ("b".into(), &self.b),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2> {
        vec![&mut self.w, &mut self.u, &mut self.b]
    }
}
