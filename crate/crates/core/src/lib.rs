//! Polyphonic music modelling with a bi-axial LSTM, and melody tuning of
//! the trained model with deep Q-learning against music-theory rewards.
//!
//! - [`midi`]: Standard MIDI File codec, piano rolls, monophonic melodies.
//! - [`kernel`]: per-note input features.
//! - [`neural`]: tensors, LSTM cells with backprop, Adadelta.
//! - [`biaxial`]: the time-axis / note-axis model, training and sampling.
//! - [`theory`]: rule rewards on melodies.
//! - [`rl`]: DQN machinery, the melody Q-network and the tuning loop.
//! - [`eval`]: melody metrics.
//! - [`checkpoint`], [`config`], [`corpus`]: files on disk.

pub mod biaxial;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod kernel;
pub mod midi;
pub mod neural;
pub mod rl;
pub mod theory;

pub use biaxial::{BiaxialParams, BiaxialShape, ModelError, TrainConfig};
pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use eval::MetricReport;
pub use midi::{MelodyAction, MelodySequence, MidiSong, NoteStateMatrix};
pub use rl::{MelodyNet, MelodyQ, TuneConfig};
pub use theory::TheoryConfig;
