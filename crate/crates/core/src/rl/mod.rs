//! Learning components: networks, buffers, and the two policy optimizers.

pub mod buffer;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod td3;

pub use buffer::{Batch, ReplayBuffer, RolloutStep, RolloutStore, Transition};
pub use nn::{Activation, Adam, Mlp, NnError};
pub use policy::{Algorithm, Policy, DEFAULT_HIDDEN};
pub use ppo::{gae, ppo_update, PpoLoss, PpoParams, PpoState};
pub use td3::{td3_update, Td3Loss, Td3Params, Td3State};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("buffer holds {have} transitions, update needs {need}")]
    InsufficientBuffer { have: usize, need: usize },
    #[error("rollouts were collected by policy version {got}, current version is {expected}")]
    StaleRollout { expected: u64, got: u64 },
    #[error("policy was built for {0}")]
    WrongAlgorithm(Algorithm),
    #[error(transparent)]
    Nn(#[from] NnError),
}
