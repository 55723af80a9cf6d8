//! The (play, articulate) piano roll and its conversion to and from MIDI.

use serde::{Deserialize, Serialize};

use super::smf::{EventKind, MidiEvent, MidiSong};
use super::MidiError;

/// Lowest MIDI pitch of the default 88-key range (A0).
pub const PIANO_LOW: u8 = 21;
/// Number of keys in the default range.
pub const PIANO_KEYS: usize = 88;
pub const DEFAULT_STEPS_PER_MEASURE: usize = 16;
/// Division used for every emitted file.
pub const EMIT_TICKS_PER_QUARTER: u16 = 480;
pub const DEFAULT_TEMPO_BPM: f64 = 120.0;

/// Binary `n_notes × n_steps × 2` grid of (play, articulate) bits.
///
/// Row `n` is MIDI pitch `note_low + n`. A sounded note has `play = 1` on
/// every step it covers and `articulate = 1` on its first step; the pair
/// (0, 1) never occurs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteStateMatrix {
    note_low: u8,
    n_notes: usize,
    n_steps: usize,
    steps_per_measure: usize,
    data: Vec<u8>,
}

impl NoteStateMatrix {
    pub fn zeros(note_low: u8, n_notes: usize, n_steps: usize, steps_per_measure: usize) -> Self {
        Self {
            note_low,
            n_notes,
            n_steps,
            steps_per_measure,
            data: vec![0; n_notes * n_steps * 2],
        }
    }

    /// Builds a matrix from per-step columns of (play, articulate) pairs.
    pub fn from_columns(
        note_low: u8,
        n_notes: usize,
        steps_per_measure: usize,
        columns: &[Vec<(u8, u8)>],
    ) -> Self {
        let mut m = Self::zeros(note_low, n_notes, columns.len(), steps_per_measure);
        for (t, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), n_notes, "column {t} has wrong height");
            for (n, &(p, a)) in col.iter().enumerate() {
                m.set(n, t, p, a);
            }
        }
        m
    }

    pub fn note_low(&self) -> u8 {
        self.note_low
    }

    pub fn n_notes(&self) -> usize {
        self.n_notes
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn steps_per_measure(&self) -> usize {
        self.steps_per_measure
    }

    /// MIDI pitch of row `n`.
    pub fn pitch(&self, n: usize) -> u8 {
        self.note_low + n as u8
    }

    /// Row index of a MIDI pitch, if it is in range.
    pub fn row_of(&self, pitch: u8) -> Option<usize> {
        let n = (pitch as usize).checked_sub(self.note_low as usize)?;
        (n < self.n_notes).then_some(n)
    }

    #[inline]
    fn idx(&self, n: usize, t: usize) -> usize {
        (n * self.n_steps + t) * 2
    }

    #[inline]
    pub fn play(&self, n: usize, t: usize) -> u8 {
        self.data[self.idx(n, t)]
    }

    #[inline]
    pub fn artic(&self, n: usize, t: usize) -> u8 {
        self.data[self.idx(n, t) + 1]
    }

    #[inline]
    pub fn pair(&self, n: usize, t: usize) -> (u8, u8) {
        let i = self.idx(n, t);
        (self.data[i], self.data[i + 1])
    }

    pub fn set(&mut self, n: usize, t: usize, play: u8, artic: u8) {
        debug_assert!(play <= 1 && artic <= 1);
        let i = self.idx(n, t);
        self.data[i] = play;
        self.data[i + 1] = artic;
    }

    pub fn column(&self, t: usize) -> Vec<(u8, u8)> {
        (0..self.n_notes).map(|n| self.pair(n, t)).collect()
    }

    /// Copy of steps `start..start + len`.
    pub fn segment(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.n_steps, "segment out of range");
        let mut out = Self::zeros(self.note_low, self.n_notes, len, self.steps_per_measure);
        for n in 0..self.n_notes {
            for t in 0..len {
                let (p, a) = self.pair(n, start + t);
                out.set(n, t, p, a);
            }
        }
        out
    }

    pub fn count_played(&self) -> usize {
        self.data.iter().step_by(2).map(|&p| p as usize).sum()
    }

    /// Checks every representation invariant.
    pub fn validate(&self) -> Result<(), MidiError> {
        if self.data.len() != self.n_notes * self.n_steps * 2 {
            return Err(MidiError::InvalidMatrix("data length mismatch".into()));
        }
        if self.note_low as usize + self.n_notes > 128 {
            return Err(MidiError::InvalidMatrix("pitch range exceeds 127".into()));
        }
        for n in 0..self.n_notes {
            for t in 0..self.n_steps {
                let (p, a) = self.pair(n, t);
                if p > 1 || a > 1 {
                    return Err(MidiError::InvalidMatrix(format!("non-binary entry at ({n}, {t})")));
                }
                if p == 0 && a == 1 {
                    return Err(MidiError::InvalidMatrix(format!(
                        "articulated but not played at ({n}, {t})"
                    )));
                }
                if p == 1 && a == 0 && (t == 0 || self.play(n, t - 1) == 0) {
                    return Err(MidiError::InvalidMatrix(format!(
                        "note onset without articulation at ({n}, {t})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A note with absolute tick bounds, collected from a song.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimedNote {
    pub pitch: u8,
    pub start: u64,
    pub end: u64,
}

/// Pairs note-on/note-off events across all tracks. A note-on for a key
/// that is already sounding ends the earlier note at that tick. Notes still
/// open at the end of their track end there. Returns the notes and the song
/// length in ticks (latest end-of-track).
pub fn collect_notes(song: &MidiSong) -> (Vec<TimedNote>, u64) {
    let mut notes = Vec::new();
    let mut song_end = 0u64;
    for track in &song.tracks {
        let mut open: [[Option<u64>; 128]; 16] = [[None; 128]; 16];
        let mut tick = 0u64;
        for ev in track {
            tick += u64::from(ev.delta);
            match ev.kind {
                EventKind::NoteOn { channel, pitch, .. } => {
                    let slot = &mut open[channel as usize & 15][pitch as usize & 127];
                    if let Some(start) = slot.take() {
                        notes.push(TimedNote { pitch, start, end: tick });
                    }
                    *slot = Some(tick);
                }
                EventKind::NoteOff { channel, pitch, .. } => {
                    if let Some(start) = open[channel as usize & 15][pitch as usize & 127].take() {
                        notes.push(TimedNote { pitch, start, end: tick });
                    }
                }
                EventKind::Tempo(_) | EventKind::EndOfTrack => {}
            }
        }
        for row in open.iter() {
            for (pitch, slot) in row.iter().enumerate() {
                if let Some(start) = slot {
                    notes.push(TimedNote {
                        pitch: pitch as u8,
                        start: *start,
                        end: tick,
                    });
                }
            }
        }
        song_end = song_end.max(tick);
    }
    notes.sort_by_key(|n| (n.start, n.pitch, n.end));
    (notes, song_end)
}

/// Quantizes a song onto a `steps_per_measure` grid (4/4 assumed).
///
/// Onsets and offsets snap to the nearest step; notes shorter than half a
/// step are dropped; pitches outside `note_low..note_low + n_notes` are
/// dropped. Tempo is irrelevant to the tick grid.
pub fn quantize(
    song: &MidiSong,
    note_low: u8,
    n_notes: usize,
    steps_per_measure: usize,
) -> Result<NoteStateMatrix, MidiError> {
    if n_notes == 0 || steps_per_measure == 0 {
        return Err(MidiError::InvalidMatrix(
            "n_notes and steps_per_measure must be positive".into(),
        ));
    }
    let (notes, song_end) = collect_notes(song);
    if notes.is_empty() {
        return Err(MidiError::EmptySong);
    }
    let ticks_per_step = f64::from(song.ticks_per_quarter) * 4.0 / steps_per_measure as f64;
    let to_step = |tick: u64| (tick as f64 / ticks_per_step).round() as usize;

    let mut spans = Vec::with_capacity(notes.len());
    for note in &notes {
        if ((note.end - note.start) as f64) < ticks_per_step / 2.0 {
            continue;
        }
        let start = to_step(note.start);
        let end = to_step(note.end).max(start + 1);
        spans.push((note.pitch, start, end));
    }
    let n_steps = spans
        .iter()
        .map(|&(_, _, end)| end)
        .max()
        .unwrap_or(0)
        .max(to_step(song_end));

    let mut m = NoteStateMatrix::zeros(note_low, n_notes, n_steps, steps_per_measure);
    for &(pitch, start, end) in &spans {
        let Some(n) = m.row_of(pitch) else { continue };
        for t in start..end {
            if m.play(n, t) == 0 {
                m.set(n, t, 1, 0);
            }
        }
    }
    // Articulations go in after all spans so a held note never erases an
    // overlapping onset.
    for &(pitch, start, _) in &spans {
        if let Some(n) = m.row_of(pitch) {
            m.set(n, start, 1, 1);
        }
    }
    Ok(m)
}

fn step_tick(t: usize, steps_per_measure: usize) -> u32 {
    let per_measure = u64::from(EMIT_TICKS_PER_QUARTER) * 4;
    ((t as u64 * per_measure + steps_per_measure as u64 / 2) / steps_per_measure as u64) as u32
}

/// Renders a matrix as a format-0 song at 480 ticks per quarter.
///
/// The end-of-track event sits exactly at the end of the last step, so
/// trailing silence survives a round trip through [`quantize`].
pub fn to_midi(matrix: &NoteStateMatrix, tempo_bpm: f64) -> Result<MidiSong, MidiError> {
    matrix.validate()?;
    if !(tempo_bpm.is_finite() && tempo_bpm > 0.0) {
        return Err(MidiError::InvalidMatrix(format!("bad tempo {tempo_bpm}")));
    }
    let spm = matrix.steps_per_measure();
    // (tick, order, pitch): note-offs sort before note-ons at the same tick.
    let mut abs: Vec<(u32, u8, u8)> = Vec::new();
    for n in 0..matrix.n_notes() {
        let pitch = matrix.pitch(n);
        let mut sounding = false;
        for t in 0..matrix.n_steps() {
            let (p, a) = matrix.pair(n, t);
            if sounding && (p == 0 || a == 1) {
                abs.push((step_tick(t, spm), 0, pitch));
                sounding = false;
            }
            if p == 1 && !sounding {
                abs.push((step_tick(t, spm), 1, pitch));
                sounding = true;
            }
        }
        if sounding {
            abs.push((step_tick(matrix.n_steps(), spm), 0, pitch));
        }
    }
    abs.sort_unstable();

    let tempo_us = (60_000_000.0 / tempo_bpm).round() as u32;
    let mut events = vec![MidiEvent::new(0, EventKind::Tempo(tempo_us))];
    let mut last = 0u32;
    for (tick, order, pitch) in abs {
        let kind = if order == 0 {
            EventKind::NoteOff {
                channel: 0,
                pitch,
                velocity: 0,
            }
        } else {
            EventKind::NoteOn {
                channel: 0,
                pitch,
                velocity: 64,
            }
        };
        events.push(MidiEvent::new(tick - last, kind));
        last = tick;
    }
    let end = step_tick(matrix.n_steps(), spm);
    events.push(MidiEvent::new(end - last, EventKind::EndOfTrack));
    Ok(MidiSong {
        ticks_per_quarter: EMIT_TICKS_PER_QUARTER,
        tracks: vec![events],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on(delta: u32, pitch: u8) -> MidiEvent {
        MidiEvent::new(delta, EventKind::NoteOn { channel: 0, pitch, velocity: 80 })
    }
    fn off(delta: u32, pitch: u8) -> MidiEvent {
        MidiEvent::new(delta, EventKind::NoteOff { channel: 0, pitch, velocity: 0 })
    }
    fn song(events: Vec<MidiEvent>) -> MidiSong {
        MidiSong { ticks_per_quarter: 480, tracks: vec![events] }
    }

    #[test]
    fn quarter_note_fills_four_steps() {
        let s = song(vec![on(0, 60), off(480, 60), MidiEvent::new(0, EventKind::EndOfTrack)]);
        let m = quantize(&s, PIANO_LOW, PIANO_KEYS, 16).unwrap();
        let n = m.row_of(60).unwrap();
        assert_eq!(m.n_steps(), 4);
        assert_eq!((0..4).map(|t| m.pair(n, t)).collect::<Vec<_>>(), vec![(1, 1), (1, 0), (1, 0), (1, 0)]);
        assert_eq!(m.count_played(), 4);
    }

    #[test]
    fn restruck_note_articulates_twice() {
        let s = song(vec![
            on(0, 60),
            off(240, 60),
            on(0, 60),
            off(240, 60),
            MidiEvent::new(0, EventKind::EndOfTrack),
        ]);
        let m = quantize(&s, PIANO_LOW, PIANO_KEYS, 16).unwrap();
        let n = m.row_of(60).unwrap();
        assert_eq!((0..4).map(|t| m.pair(n, t)).collect::<Vec<_>>(), vec![(1, 1), (1, 0), (1, 1), (1, 0)]);
    }

    #[test]
    fn silent_measure_is_zero_and_out_of_range_dropped() {
        let s = song(vec![
            on(0, 60),
            off(120, 60),
            on(0, 10),
            off(120, 10),
            MidiEvent::new(1920 - 240, EventKind::EndOfTrack),
        ]);
        let m = quantize(&s, PIANO_LOW, PIANO_KEYS, 16).unwrap();
        assert_eq!(m.n_steps(), 16);
        for t in 2..16 {
            assert!(m.column(t).iter().all(|&pa| pa == (0, 0)));
        }
        assert_eq!(m.count_played(), 1);
    }

    #[test]
    fn short_notes_dropped_and_empty_song_errors() {
        let s = song(vec![on(0, 60), off(50, 60), on(70, 62), off(60, 62), MidiEvent::new(0, EventKind::EndOfTrack)]);
        let m = quantize(&s, PIANO_LOW, PIANO_KEYS, 16).unwrap();
        assert_eq!(m.count_played(), 1);
        assert_eq!(m.row_of(62).map(|n| m.play(n, 1)), Some(1));

        let empty = song(vec![MidiEvent::new(960, EventKind::EndOfTrack)]);
        assert_eq!(quantize(&empty, PIANO_LOW, PIANO_KEYS, 16), Err(MidiError::EmptySong));
    }

    #[test]
    fn velocity_zero_note_on_matches_note_off() {
        let a = song(vec![on(0, 64), off(240, 64), MidiEvent::new(0, EventKind::EndOfTrack)]);
        let mut b = a.clone();
        b.tracks[0][1] = MidiEvent::new(240, EventKind::NoteOn { channel: 0, pitch: 64, velocity: 0 });
        // the parser normalizes vel-0 note-ons, so compare through bytes
        let parsed = super::super::parse_midi(&super::super::write_midi(&b)).unwrap();
        assert_eq!(quantize(&parsed, PIANO_LOW, PIANO_KEYS, 16), quantize(&a, PIANO_LOW, PIANO_KEYS, 16));
    }

    #[test]
    fn to_midi_of_silence_has_only_tempo_and_end() {
        let m = NoteStateMatrix::zeros(PIANO_LOW, PIANO_KEYS, 8, 16);
        let s = to_midi(&m, 120.0).unwrap();
        assert_eq!(
            s.tracks[0],
            vec![MidiEvent::new(0, EventKind::Tempo(500_000)), MidiEvent::new(960, EventKind::EndOfTrack)]
        );
    }

    #[test]
    fn to_midi_quarter_note_is_one_pair() {
        let s = song(vec![on(0, 60), off(480, 60), MidiEvent::new(0, EventKind::EndOfTrack)]);
        let m = quantize(&s, PIANO_LOW, PIANO_KEYS, 16).unwrap();
        let back = to_midi(&m, 120.0).unwrap();
        assert_eq!(
            back.tracks[0],
            vec![
                MidiEvent::new(0, EventKind::Tempo(500_000)),
                MidiEvent::new(0, EventKind::NoteOn { channel: 0, pitch: 60, velocity: 64 }),
                MidiEvent::new(480, EventKind::NoteOff { channel: 0, pitch: 60, velocity: 0 }),
                MidiEvent::new(0, EventKind::EndOfTrack),
            ]
        );
    }

    #[test]
    fn validate_rejects_bad_pairs() {
        let mut m = NoteStateMatrix::zeros(60, 2, 3, 16);
        m.set(0, 1, 0, 1);
        assert!(m.validate().is_err());
        let mut m = NoteStateMatrix::zeros(60, 2, 3, 16);
        m.set(1, 0, 1, 0);
        assert!(m.validate().is_err());
        let mut m = NoteStateMatrix::zeros(60, 2, 3, 16);
        m.set(1, 0, 1, 1);
        m.set(1, 1, 1, 0);
        assert!(m.validate().is_ok());
        assert!(to_midi(&NoteStateMatrix::zeros(60, 2, 3, 16), 0.0).is_err());
    }
}
