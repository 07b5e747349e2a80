//! Experiment orchestration: multi-instance, multi-seed DDPG runs with a
//! fixed evaluation cadence, aggregate statistics and the curriculum loop
//! that keeps enlarging the LEP training set.

mod curriculum;
mod experiment;
mod stats;

pub use curriculum::{curriculum_round, CurriculumConfig, CurriculumState, PolicyRecord, RoundRecord};
pub use experiment::{
    run_experiment, run_single, EvalPoint, Exploration, ExperimentPlan, ExperimentResult, LearningCurve, RunRecord,
};
pub use stats::{
    aggregate_curves, censored_median, episodes_to_threshold, histogram, median, robustness_sweep, AggregatePoint,
    HistogramBin, PooledStats, VariantStats,
};

use crate::ddpg::DdpgError;
use crate::envs::EnvError;
use crate::explore::ExploreError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("curriculum round {round} aborted: {reason}")]
    Aborted { round: usize, reason: String },
    #[error(transparent)]
    Ddpg(#[from] DdpgError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("output I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
