//! MIDI ingestion and emission, and the piano-roll / melody encodings.

mod melody;
mod roll;
mod smf;

use thiserror::Error;

pub use melody::{
    action_pitch, extract_melody, pitch_action, MelodyAction, MelodyNote, MelodySequence,
    MELODY_HIGH, MELODY_LOW, MELODY_PITCHES, NOTE_OFF, NO_EVENT, NUM_ACTIONS,
};
pub use roll::{
    collect_notes, quantize, to_midi, NoteStateMatrix, TimedNote, DEFAULT_STEPS_PER_MEASURE,
    DEFAULT_TEMPO_BPM, EMIT_TICKS_PER_QUARTER, PIANO_KEYS, PIANO_LOW,
};
pub use smf::{parse_midi, write_midi, EventKind, MidiEvent, MidiSong};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MidiError {
    #[error("malformed MIDI at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("truncated MIDI data at byte {offset}")]
    Truncated { offset: usize },
    #[error("running status without a prior status byte at byte {offset}")]
    RunningStatus { offset: usize },
    #[error("unsupported MIDI file: {0}")]
    Unsupported(String),
    #[error("empty song")]
    EmptySong,
    #[error("invalid note state matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid melody: {0}")]
    InvalidMelody(String),
}
