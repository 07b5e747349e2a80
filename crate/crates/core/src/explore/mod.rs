//! Exploration processes for DDPG: i.i.d. Gaussian noise, Ornstein-Uhlenbeck
//! noise and the learned exploration process (LEP), an LSTM with a diagonal
//! Gaussian head trained on short windows of earlier trajectories.

mod concentration;
mod dataset;
mod lep;
mod noise;

pub use concentration::{
    circular_variance, conditioning_concentration, ConcentrationConfig, ConcentrationReport,
};
pub use dataset::{
    collect_trajectories, read_dataset, sample_subsequences, write_dataset, DatasetHeader,
    Source, SubsequenceDataset, Trajectory, DATASET_VERSION,
};
pub use lep::{train_lep, GaussianSequenceModel, LepConfig, LepSampler, LEP_KIND};
pub use noise::{gaussian_sample, ou_step, GaussianNoise, OuNoise, OuParams};

use crate::envs::EnvError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum ExploreError {
    #[error("trajectory {index} has {len} steps, shorter than horizon {horizon}")]
    TooShort {
        index: usize,
        len: usize,
        horizon: usize,
    },
    #[error("dataset is empty")]
    Empty,
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("steps must be fed in order: expected t = {expected}, got {got}")]
    OutOfOrder { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("dataset line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("dataset I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Source of additive action noise, one sample per control step.
///
/// `reset` starts a new episode; `sample` receives the current state, which
/// only state-conditioned processes use.
pub trait ExplorationProcess: Send {
    fn dim(&self) -> usize;

    fn reset(&mut self, seed: u64);

    fn sample(&mut self, state: &[f64]) -> Result<Vec<f64>, ExploreError>;
}

impl<P: ExplorationProcess + ?Sized> ExplorationProcess for Box<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn reset(&mut self, seed: u64) {
        (**self).reset(seed)
    }

    fn sample(&mut self, state: &[f64]) -> Result<Vec<f64>, ExploreError> {
        (**self).sample(state)
    }
}
