use rand::Rng;

use super::{uniform_init, Binding, Module, NnError};
use crate::mathcore::{Array2, NodeId, Tape};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Linear map from a hidden vector to a diagonal Gaussian `(mean, log-std)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHead {
    action_dim: usize,
    w: Array2,
    b: Array2,
}

impl GaussianHead {
    pub fn new(hidden: usize, action_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            action_dim,
            w: uniform_init(hidden, 2 * action_dim, bound, rng),
            b: uniform_init(1, 2 * action_dim, bound, rng),
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Returns `(mean, clamped log-std)` nodes, each `B×D`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        hidden: NodeId,
    ) -> Result<(NodeId, NodeId), NnError> {
        let d = self.action_dim;
        let z = tape.matmul(hidden, bind.id(0))?;
        let z = tape.add(z, bind.id(1))?;
        let mean = tape.slice_cols(z, 0, d)?;
        let raw = tape.slice_cols(z, d, 2 * d)?;
        let log_std = tape.clamp(raw, LOG_STD_MIN, LOG_STD_MAX)?;
        Ok((mean, log_std))
    }

    /// Returns `(mean, std)` for every row of `hidden`.
    pub fn eval(&self, hidden: &Array2) -> Result<(Array2, Array2), NnError> {
        let d = self.action_dim;
        let z = hidden.matmul(&self.w)?.add_broadcast(&self.b)?;
        let mean = z.slice_cols(0, d)?;
        let std = z
            .slice_cols(d, 2 * d)?
            .map(|r| r.clamp(LOG_STD_MIN, LOG_STD_MAX).exp());
        Ok((mean, std))
    }
}

impl Module for GaussianHead {
    fn named_tensors(&self) -> Vec<(String, &Array2)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Negative log-likelihood of `a` under `N(mean, diag(std²))`.
pub fn gaussian_nll(mean: &[f64], std: &[f64], a: &[f64]) -> Result<f64, NnError> {
    if mean.len() != std.len() || mean.len() != a.len() {
        return Err(NnError::Length(format!(
            "mean {}, std {}, sample {}",
            mean.len(),
            std.len(),
            a.len()
        )));
    }
    let mut nll = 0.0;
    for ((&m, &s), &x) in mean.iter().zip(std).zip(a) {
        if !(s > 0.0) {
            return Err(NnError::NonPositiveStd(s));
        }
        let r = (x - m) / s;
        nll += HALF_LOG_2PI + s.ln() + 0.5 * r * r;
    }
    Ok(nll)
}

/// Recorded NLL summed over action dims and averaged over rows.
pub fn gaussian_nll_node(
    tape: &mut Tape,
    mean: NodeId,
    log_std: NodeId,
    target: NodeId,
) -> Result<NodeId, NnError> {
    let rows = tape.shape(mean).0 as f64;
    let dims = tape.shape(mean).1 as f64;
    let diff = tape.sub(target, mean)?;
    let sq = tape.square(diff)?;
    let neg2 = tape.scale(log_std, -2.0)?;
    let inv_var = tape.exp(neg2)?;
    let quad = tape.mul_elem(sq, inv_var)?;
    let quad = tape.scale(quad, 0.5)?;
    let per = tape.add(quad, log_std)?;
    let total = tape.sum(per)?;
    let avg = tape.scale(total, 1.0 / rows)?;
    let offset = tape.constant(Array2::scalar(HALF_LOG_2PI * dims));
    Ok(tape.add(avg, offset)?)
}
