//! The bi-axial model.
//!
//! A timewise LSTM stack runs along the steps of each note with weights
//! shared by all notes. At every step a notewise stack then walks up the
//! pitch axis, seeing the timewise output of the current note and the
//! (play, articulate) pair of the note below, and emits two logits.

mod forward;
mod generate;
mod params;
mod stack;
mod train;

use thiserror::Error;

use crate::neural::NeuralError;

pub use forward::{loss, notewise_pass, timewise_pass, Feedback, Hidden, Logits, LossValue, NoteFeedback};
pub use generate::{generate, sample_column, silent_seed, TimewiseMemory};
pub use params::{BiaxialParams, BiaxialShape, FEEDBACK_WIDTH};
pub use stack::{stack_backward, stack_forward, stack_step, zero_state, Dropout, StackState, StackTape};
pub use train::{loss_and_gradient, train, TrainConfig, TrainRecord};

pub(crate) use forward::project;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model shape: {0}")]
    InvalidShape(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no song is at least {seq_len} steps long")]
    NoSegments { seq_len: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
}
