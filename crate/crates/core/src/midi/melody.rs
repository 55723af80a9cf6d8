//! Monophonic 38-action melody encoding.
//!
//! Action 0 turns the sounding note off, action 1 is "no event" (hold the
//! current note, or stay silent), and action `k` in `2..=37` strikes MIDI
//! pitch `46 + k`, covering the three octaves from C3 (48) to B5 (83).

use serde::{Deserialize, Serialize};

use super::roll::NoteStateMatrix;
use super::MidiError;

pub type MelodyAction = u8;

pub const NOTE_OFF: MelodyAction = 0;
pub const NO_EVENT: MelodyAction = 1;
pub const NUM_ACTIONS: usize = 38;
/// MIDI pitch struck by action 2.
pub const MELODY_LOW: u8 = 48;
/// Highest MIDI pitch an action can strike.
pub const MELODY_HIGH: u8 = 83;
pub const MELODY_PITCHES: usize = 36;

/// Pitch struck by `action`, if it is a pitch action.
#[inline]
pub fn action_pitch(action: MelodyAction) -> Option<u8> {
    (2..NUM_ACTIONS as u8).contains(&action).then(|| action + 46)
}

/// Action striking `pitch`, if the pitch is in the melody range.
#[inline]
pub fn pitch_action(pitch: u8) -> Option<MelodyAction> {
    (MELODY_LOW..=MELODY_HIGH).contains(&pitch).then(|| pitch - 46)
}

/// One decoded segment of a melody: a note (`pitch = Some`) or a rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MelodyNote {
    pub pitch: Option<u8>,
    pub start: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MelodySequence {
    actions: Vec<MelodyAction>,
}

impl MelodySequence {
    pub fn new(actions: Vec<MelodyAction>) -> Result<Self, MidiError> {
        if let Some(pos) = actions.iter().position(|&a| a as usize >= NUM_ACTIONS) {
            return Err(MidiError::InvalidMelody(format!(
                "action {} at position {pos} is outside 0..=37",
                actions[pos]
            )));
        }
        Ok(Self { actions })
    }

    pub fn actions(&self) -> &[MelodyAction] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, action: MelodyAction) {
        assert!((action as usize) < NUM_ACTIONS, "action out of range");
        self.actions.push(action);
    }

    /// Splits the melody into notes and rests. Holds extend the current
    /// segment; a hold before any note is part of a leading rest.
    pub fn notes(&self) -> Vec<MelodyNote> {
        let mut out: Vec<MelodyNote> = Vec::new();
        for (t, &a) in self.actions.iter().enumerate() {
            match (a, out.last_mut()) {
                (NO_EVENT, Some(cur)) => cur.steps += 1,
                (NOTE_OFF, Some(cur)) if cur.pitch.is_none() => cur.steps += 1,
                (NO_EVENT | NOTE_OFF, _) => out.push(MelodyNote {
                    pitch: None,
                    start: t,
                    steps: 1,
                }),
                (k, _) => out.push(MelodyNote {
                    pitch: action_pitch(k),
                    start: t,
                    steps: 1,
                }),
            }
        }
        out
    }

    /// Renders the melody as a piano roll.
    pub fn to_matrix(&self, note_low: u8, n_notes: usize, steps_per_measure: usize) -> NoteStateMatrix {
        let mut m = NoteStateMatrix::zeros(note_low, n_notes, self.actions.len(), steps_per_measure);
        for note in self.notes() {
            let Some(n) = note.pitch.and_then(|p| m.row_of(p)) else {
                continue;
            };
            m.set(n, note.start, 1, 1);
            for t in note.start + 1..note.start + note.steps {
                m.set(n, t, 1, 0);
            }
        }
        m
    }
}

/// Projects a polyphonic roll onto its highest in-range voice.
///
/// Per step the highest sounding pitch in 48..=83 is tracked. A new onset of
/// that pitch, or a change of which pitch is on top, emits the pitch action;
/// otherwise a sounding top voice emits 1 (hold). The first silent step after
/// sound emits 0, further silence emits 1.
pub fn extract_melody(matrix: &NoteStateMatrix) -> MelodySequence {
    let rows: Vec<(usize, u8)> = (0..matrix.n_notes())
        .map(|n| (n, matrix.pitch(n)))
        .filter(|&(_, p)| pitch_action(p).is_some())
        .collect();
    let mut actions = Vec::with_capacity(matrix.n_steps());
    let mut prev_top: Option<u8> = None;
    for t in 0..matrix.n_steps() {
        let top = rows
            .iter()
            .rev()
            .find(|&&(n, _)| matrix.play(n, t) == 1)
            .map(|&(n, p)| (p, matrix.artic(n, t) == 1));
        let action = match (top, prev_top) {
            (Some((p, struck)), prev) if struck || prev != Some(p) => {
                pitch_action(p).expect("row filtered to melody range")
            }
            (Some(_), _) => NO_EVENT,
            (None, Some(_)) => NOTE_OFF,
            (None, None) => NO_EVENT,
        };
        actions.push(action);
        prev_top = top.map(|(p, _)| p);
    }
    MelodySequence { actions }
}
