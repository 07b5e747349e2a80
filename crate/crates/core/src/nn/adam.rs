use serde::{Deserialize, Serialize};

use super::NnError;
use crate::mathcore::Array2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adam with bias-corrected moments. Moment buffers are shaped on first use.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Array2>,
    v: Vec<Array2>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Descends along `grads`.
    pub fn step(&mut self, params: Vec<&mut Array2>, grads: &[Array2]) -> Result<(), NnError> {
        if params.len() != grads.len() {
            return Err(NnError::Optimizer(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Array2::zeros(p.rows(), p.cols())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(NnError::Optimizer(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(NnError::Optimizer(format!(
                    "tensor {i}: parameter {:?}, gradient {:?}, moments {:?}",
                    p.shape(),
                    g.shape(),
                    self.m[i].shape()
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Array2::row(&[1.0, -2.0]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(vec![&mut p], &[Array2::zeros(1, 2)]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Array2::scalar(1.0);
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        adam.step(vec![&mut p], &[Array2::scalar(1.0)]).unwrap();
        // m_hat = v_hat = 1 -> p = 1 - 0.1 * 1 / (1 + 1e-8)
        assert!((p.item() - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((p.item() - 0.9).abs() < 1e-8);
    }

    #[test]
    fn repeated_positive_gradient_decreases() {
        let mut p = Array2::scalar(1.0);
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        adam.step(vec![&mut p], &[Array2::scalar(1.0)]).unwrap();
        let after_one = p.item();
        adam.step(vec![&mut p], &[Array2::scalar(1.0)]).unwrap();
        assert_eq!(adam.steps(), 2);
        assert!(p.item() < after_one && after_one < 1.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Array2::row(&[1.0, 2.0]);
        let mut adam = Adam::new(AdamConfig::default());
        assert!(adam.step(vec![&mut p], &[Array2::zeros(2, 1)]).is_err());
        assert_eq!(adam.steps(), 0);
    }
}
