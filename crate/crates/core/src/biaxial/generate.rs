use rand::Rng;

use super::forward::{project, sample_pair};
use super::params::BiaxialParams;
use super::stack::{stack_step, zero_state, StackState};
use super::ModelError;
use crate::kernel::{expand_column, FEATURE_WIDTH};
use crate::midi::NoteStateMatrix;

/// Running timewise state of every note.
#[derive(Debug, Clone, PartialEq)]
pub struct TimewiseMemory {
    pub notes: Vec<StackState>,
}

impl TimewiseMemory {
    pub fn zeros(params: &BiaxialParams, n_notes: usize) -> Self {
        Self {
            notes: vec![zero_state(&params.time); n_notes],
        }
    }

    /// Consumes the column played at absolute step `t` and returns every
    /// note's top timewise output.
    pub fn advance(
        &mut self,
        params: &BiaxialParams,
        column: &[(u8, u8)],
        note_low: u8,
        t: usize,
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        if column.len() != self.notes.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "column has {} notes, memory has {}",
                column.len(),
                self.notes.len()
            )));
        }
        let features = expand_column(column, note_low, t);
        self.notes
            .iter_mut()
            .zip(features.chunks_exact(FEATURE_WIDTH))
            .map(|(state, x)| stack_step(&params.time, x, state).map_err(ModelError::from))
            .collect()
    }
}

/// Samples one column along the note axis. `prev_play` is the play bit of
/// each note on the previous step.
pub fn sample_column<R: Rng + ?Sized>(
    params: &BiaxialParams,
    tops: &[Vec<f64>],
    prev_play: &[u8],
    rng: &mut R,
) -> Result<Vec<(u8, u8)>, ModelError> {
    let mut state = zero_state(&params.note);
    let mut below = (0u8, 0u8);
    let mut column = Vec::with_capacity(tops.len());
    for (n, top) in tops.iter().enumerate() {
        let mut x = top.clone();
        x.push(below.0 as f64);
        x.push(below.1 as f64);
        let h = stack_step(&params.note, &x, &mut state)?;
        below = sample_pair(project(params, &h), prev_play[n], rng);
        column.push(below);
    }
    Ok(column)
}

/// Free-running generation of `steps` columns after `seed`. The seed's
/// columns are fed first; the returned roll holds only new columns. Dropout
/// is never applied here.
pub fn generate<R: Rng + ?Sized>(
    params: &BiaxialParams,
    seed: &NoteStateMatrix,
    steps: usize,
    rng: &mut R,
) -> Result<NoteStateMatrix, ModelError> {
    if steps == 0 {
        return Err(ModelError::InvalidConfig("generation needs at least one step".into()));
    }
    if seed.n_steps() == 0 {
        return Err(ModelError::InvalidConfig("seed roll needs at least one step".into()));
    }
    seed.validate().map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
    let (nn, low) = (seed.n_notes(), seed.note_low());
    let mut memory = TimewiseMemory::zeros(params, nn);
    for t in 0..seed.n_steps() - 1 {
        memory.advance(params, &seed.column(t), low, t)?;
    }
    let mut out = NoteStateMatrix::zeros(low, nn, steps, seed.steps_per_measure());
    let mut column = seed.column(seed.n_steps() - 1);
    for k in 0..steps {
        let t = seed.n_steps() - 1 + k;
        let tops = memory.advance(params, &column, low, t)?;
        let prev_play: Vec<u8> = column.iter().map(|&(p, _)| p).collect();
        column = sample_column(params, &tops, &prev_play, rng)?;
        for (n, &(p, a)) in column.iter().enumerate() {
            out.set(n, k, p, a);
        }
    }
    Ok(out)
}

/// One silent step over the given range, the default generation seed.
pub fn silent_seed(note_low: u8, n_notes: usize, steps_per_measure: usize) -> NoteStateMatrix {
    NoteStateMatrix::zeros(note_low, n_notes, 1, steps_per_measure)
}
