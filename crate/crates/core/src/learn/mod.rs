//! Networks, optimizer, constrained soft actor-critic and imitation replay.

use alloc::string::String;

pub mod adam;
pub mod buffer;
pub mod csac;
pub mod mlp;
pub mod policy;
pub mod train;

pub use adam::Adam;
pub use buffer::{Batch, ReplayBuffer};
pub use csac::{CsacAgent, CsacConfig, LossReport};
pub use mlp::{Mlp, Tape};
pub use policy::GaussianPolicy;
pub use train::{evaluate, evaluate_agent, train_run, EpisodeMetrics, EvalReport, TrainArtifact, TrainConfig};

use crate::env::EnvError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("replay buffer: {0}")]
    Buffer(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}
