//! Dense numerics: tensors, the LSTM cell, dropout, Adadelta and gradient
//! checking. Everything is `f64`.

mod adadelta;
mod dropout;
pub mod gradcheck;
mod lstm;
mod tensor;

use thiserror::Error;

pub use adadelta::{Adadelta, AdadeltaState, ParamSet};
pub use dropout::dropout_mask;
pub use lstm::{
    lstm_backward_sequence, lstm_forward_sequence, lstm_step, lstm_step_backward, lstm_step_cached,
    Gate, LstmCellParams, LstmStepCache, LstmTape, SequenceGrads, StepGrads,
};
pub use tensor::{axpy, dot, log_sigmoid, logsumexp, sigmoid, softmax, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("{what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("backward pass needs {needed} cached steps but only {recorded} were recorded")]
    MissingCache { needed: usize, recorded: usize },
    #[error("keep probability must be in (0, 1], got {0}")]
    InvalidKeepProb(f64),
}
