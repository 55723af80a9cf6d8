//! Per-note input features.
//!
//! Every (note, step) of a roll becomes an 80-wide vector:
//!
//! | offset | width | content                                             |
//! |--------|-------|-----------------------------------------------------|
//! | 0      | 1     | MIDI number / 128                                   |
//! | 1      | 12    | pitch-class one-hot                                 |
//! | 13     | 50    | (play, articulate) of notes n−12 ..= n+12           |
//! | 63     | 12    | number of playing notes per pitch class             |
//! | 75     | 4     | bits of `t mod 16`, least significant first         |
//! | 79     | 1     | zero                                                |
//!
//! Vicinity entries for rows outside the roll are zero.

use crate::midi::NoteStateMatrix;

pub const FEATURE_WIDTH: usize = 80;
pub const VICINITY_RADIUS: usize = 12;

pub const OFF_MIDI: usize = 0;
pub const OFF_PITCH_CLASS: usize = 1;
pub const OFF_VICINITY: usize = 13;
pub const OFF_CLASS_COUNT: usize = 63;
pub const OFF_BEAT: usize = 75;
pub const OFF_PAD: usize = 79;

/// Expanded features for a whole roll, laid out `[note][step][feature]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteStateExpand {
    n_notes: usize,
    n_steps: usize,
    data: Vec<f64>,
}

impl NoteStateExpand {
    pub fn n_notes(&self) -> usize {
        self.n_notes
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn get(&self, n: usize, t: usize) -> &[f64] {
        let i = (n * self.n_steps + t) * FEATURE_WIDTH;
        &self.data[i..i + FEATURE_WIDTH]
    }

    /// Feature vectors of one note over all steps.
    pub fn note_sequence(&self, n: usize) -> Vec<Vec<f64>> {
        (0..self.n_steps).map(|t| self.get(n, t).to_vec()).collect()
    }
}

/// Features of every note for a single column at absolute step `t`.
/// Returns `n_notes × 80` row-major.
pub fn expand_column(column: &[(u8, u8)], note_low: u8, t: usize) -> Vec<f64> {
    let n_notes = column.len();
    let mut counts = [0.0f64; 12];
    for (n, &(p, _)) in column.iter().enumerate() {
        if p == 1 {
            counts[(note_low as usize + n) % 12] += 1.0;
        }
    }
    let beat = t % 16;
    let mut out = vec![0.0; n_notes * FEATURE_WIDTH];
    for (n, v) in out.chunks_exact_mut(FEATURE_WIDTH).enumerate() {
        let midi = note_low as usize + n;
        v[OFF_MIDI] = midi as f64 / 128.0;
        v[OFF_PITCH_CLASS + midi % 12] = 1.0;
        for d in 0..=2 * VICINITY_RADIUS {
            let Some(m) = (n + d).checked_sub(VICINITY_RADIUS) else {
                continue;
            };
            if let Some(&(p, a)) = column.get(m) {
                v[OFF_VICINITY + 2 * d] = p as f64;
                v[OFF_VICINITY + 2 * d + 1] = a as f64;
            }
        }
        v[OFF_CLASS_COUNT..OFF_CLASS_COUNT + 12].copy_from_slice(&counts);
        for b in 0..4 {
            v[OFF_BEAT + b] = ((beat >> b) & 1) as f64;
        }
    }
    out
}

/// Expands every step of `matrix`, numbering steps from 0.
pub fn expand(matrix: &NoteStateMatrix) -> NoteStateExpand {
    let (nn, nt) = (matrix.n_notes(), matrix.n_steps());
    let mut data = vec![0.0; nn * nt * FEATURE_WIDTH];
    for t in 0..nt {
        let col = expand_column(&matrix.column(t), matrix.note_low(), t);
        for n in 0..nn {
            let dst = (n * nt + t) * FEATURE_WIDTH;
            data[dst..dst + FEATURE_WIDTH].copy_from_slice(&col[n * FEATURE_WIDTH..(n + 1) * FEATURE_WIDTH]);
        }
    }
    NoteStateExpand {
        n_notes: nn,
        n_steps: nt,
        data,
    }
}
