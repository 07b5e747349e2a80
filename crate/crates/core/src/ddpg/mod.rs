//! Deep deterministic policy gradient with a pluggable exploration process.

mod agent;
mod replay;

pub use agent::{ActorPolicy, DdpgAgent, DdpgConfig, EpisodeStats, ACTOR_KIND, CRITIC_KIND};
pub use replay::{Batch, ReplayBuffer, Transition};

use crate::envs::EnvError;
use crate::explore::ExploreError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum DdpgError {
    #[error("invalid ddpg config: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
}
