//! Reinforcement-learning fine-tuning of a primed melody model.

mod dqn;
mod melody;
pub mod toy;
mod tuner;

use thiserror::Error;

use crate::biaxial::ModelError;
use crate::midi::MidiError;
use crate::neural::NeuralError;

pub use dqn::{
    choose_action, q_loss_and_grad, q_update, target_sync, td_target, ActionPolicy, Exploration, QFunction,
    ReplayBuffer, Transition,
};
pub use melody::{
    log_softmax, melody_log_prob, next_sounding, projection_backward, projection_scores, sample_melody, MelodyNet,
    MelodyPolicy, MelodyQ, MelodyQCache, MelodyState,
};
pub use tuner::{blended_reward, mean_reward, trace_csv, tune, TuneConfig, TuneRecord};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("pitch range: {0}")]
    Range(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Midi(#[from] MidiError),
}
