use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ExplorationProcess, ExploreError};

/// `dim` i.i.d. draws from `N(0, sigma²)`.
pub fn gaussian_sample(sigma: f64, dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[derive(Clone, Debug)]
pub struct GaussianNoise {
    sigma: f64,
    dim: usize,
    rng: ChaCha8Rng,
}

impl GaussianNoise {
    pub fn new(sigma: f64, dim: usize) -> Result<Self, ExploreError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(ExploreError::Param(format!("gaussian sigma must be >= 0, got {sigma}")));
        }
        Ok(Self {
            sigma,
            dim,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }
}

impl ExplorationProcess for GaussianNoise {
    fn dim(&self) -> usize {
        self.dim
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn sample(&mut self, _state: &[f64]) -> Result<Vec<f64>, ExploreError> {
        Ok(gaussian_sample(self.sigma, self.dim, &mut self.rng))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuParams {
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
    pub dt: f64,
}

impl Default for OuParams {
    fn default() -> Self {
        Self {
            theta: 0.15,
            sigma: 0.2,
            mu: 0.0,
            dt: 1.0,
        }
    }
}

impl OuParams {
    pub fn validate(&self) -> Result<(), ExploreError> {
        if !(self.theta > 0.0) || !(self.sigma >= 0.0) || !(self.dt > 0.0) {
            return Err(ExploreError::Param(format!(
                "OU needs theta > 0, sigma >= 0, dt > 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    /// Stationary standard deviation of the discretized process.
    pub fn stationary_std(&self) -> f64 {
        let a = self.theta * self.dt;
        self.sigma * self.dt.sqrt() / (2.0 * a - a * a).sqrt()
    }
}

/// One Euler-Maruyama step `x += theta (mu - x) dt + sigma sqrt(dt) N(0, 1)` per dim.
pub fn ou_step(p: &OuParams, x: &mut [f64], rng: &mut impl Rng) {
    let s = p.sigma * p.dt.sqrt();
    for v in x.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *v += p.theta * (p.mu - *v) * p.dt + s * n;
    }
}

#[derive(Clone, Debug)]
pub struct OuNoise {
    params: OuParams,
    x: Vec<f64>,
    rng: ChaCha8Rng,
}

impl OuNoise {
    pub fn new(params: OuParams, dim: usize) -> Result<Self, ExploreError> {
        params.validate()?;
        Ok(Self {
            params,
            x: vec![params.mu; dim],
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }
}

impl ExplorationProcess for OuNoise {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.x.iter_mut().for_each(|v| *v = self.params.mu);
    }

    fn sample(&mut self, _state: &[f64]) -> Result<Vec<f64>, ExploreError> {
        ou_step(&self.params, &mut self.x, &mut self.rng);
        Ok(self.x.clone())
    }
}
