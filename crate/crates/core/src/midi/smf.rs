//! Standard MIDI File reader and writer (formats 0 and 1).
//!
//! Only the events the rest of the crate consumes are kept: note-on,
//! note-off, tempo and end-of-track. Everything else (controllers, program
//! changes, sysex, other meta events) is skipped, with its delta time folded
//! into the next kept event so absolute tick positions stay exact.

use super::MidiError;

/// Kind of a kept track event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    NoteOn { channel: u8, pitch: u8, velocity: u8 },
    NoteOff { channel: u8, pitch: u8, velocity: u8 },
    /// Microseconds per quarter note.
    Tempo(u32),
    EndOfTrack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MidiEvent {
    pub delta: u32,
    pub kind: EventKind,
}

impl MidiEvent {
    pub fn new(delta: u32, kind: EventKind) -> Self {
        Self { delta, kind }
    }
}

/// A parsed (or to-be-written) Standard MIDI File.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiSong {
    pub ticks_per_quarter: u16,
    pub tracks: Vec<Vec<MidiEvent>>,
}

impl MidiSong {
    /// First tempo event in the song, in microseconds per quarter note.
    pub fn first_tempo(&self) -> Option<u32> {
        self.tracks
            .iter()
            .flat_map(|t| t.iter())
            .find_map(|e| match e.kind {
                EventKind::Tempo(us) => Some(us),
                _ => None,
            })
    }

    pub fn note_event_count(&self) -> usize {
        self.tracks
            .iter()
            .flat_map(|t| t.iter())
            .filter(|e| matches!(e.kind, EventKind::NoteOn { .. } | EventKind::NoteOff { .. }))
            .count()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or(MidiError::Truncated { offset: self.pos })?;
        self.pos += 1;
        Ok(b)
    }

    fn peek(&self) -> Result<u8, MidiError> {
        self.bytes
            .get(self.pos)
            .copied()
            .ok_or(MidiError::Truncated { offset: self.pos })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(MidiError::Truncated { offset: self.pos })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, MidiError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most four bytes.
    fn vlq(&mut self) -> Result<u32, MidiError> {
        let start = self.pos;
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7F);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(MidiError::Malformed {
            offset: start,
            reason: "variable-length quantity longer than 4 bytes".into(),
        })
    }

    fn data_byte(&mut self) -> Result<u8, MidiError> {
        let offset = self.pos;
        let b = self.u8()?;
        if b & 0x80 != 0 {
            return Err(MidiError::Malformed {
                offset,
                reason: format!("expected data byte, found status {b:#04x}"),
            });
        }
        Ok(b)
    }
}

/// Parses a Standard MIDI File.
///
/// Note-on events with velocity 0 are normalized to note-off events.
pub fn parse_midi(bytes: &[u8]) -> Result<MidiSong, MidiError> {
    let mut r = Reader::new(bytes);
    if r.take(4).map_err(|_| MidiError::Malformed {
        offset: 0,
        reason: "missing MThd header".into(),
    })? != b"MThd"
    {
        return Err(MidiError::Malformed {
            offset: 0,
            reason: "file does not start with MThd".into(),
        });
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(MidiError::Malformed {
            offset: 4,
            reason: format!("header length {header_len} is shorter than 6"),
        });
    }
    let header_start = r.pos;
    let format = r.u16()?;
    let n_tracks = r.u16()?;
    let division = r.u16()?;
    r.take(header_len - 6)?;
    if format > 1 {
        return Err(MidiError::Unsupported(format!("SMF format {format}")));
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::Unsupported("SMPTE time division".into()));
    }
    if division == 0 {
        return Err(MidiError::Malformed {
            offset: header_start + 4,
            reason: "zero ticks per quarter note".into(),
        });
    }

    let mut tracks = Vec::with_capacity(n_tracks as usize);
    while tracks.len() < n_tracks as usize {
        let chunk_at = r.pos;
        let tag = r.take(4)?;
        let len = r.u32()? as usize;
        let body_start = r.pos;
        if r.take(len).is_err() {
            return Err(MidiError::Truncated { offset: chunk_at });
        }
        if tag == b"MTrk" {
            tracks.push(parse_track(bytes, body_start, body_start + len)?);
        }
    }

    Ok(MidiSong {
        ticks_per_quarter: division,
        tracks,
    })
}

fn parse_track(bytes: &[u8], start: usize, end: usize) -> Result<Vec<MidiEvent>, MidiError> {
    let mut r = Reader {
        bytes: &bytes[..end],
        pos: start,
    };
    let mut events = Vec::new();
    let mut running: Option<u8> = None;
    let mut pending: u32 = 0;

    while r.pos < end {
        let delta = r.vlq()?;
        pending = pending.saturating_add(delta);
        let status_at = r.pos;
        let status = if r.peek()? & 0x80 != 0 {
            r.u8()?
        } else {
            running.ok_or(MidiError::RunningStatus { offset: status_at })?
        };

        match status {
            0x80..=0xEF => {
                running = Some(status);
                let channel = status & 0x0F;
                let kind = status & 0xF0;
                let first = r.data_byte()?;
                let second = if kind == 0xC0 || kind == 0xD0 {
                    None
                } else {
                    Some(r.data_byte()?)
                };
                let kept = match (kind, second) {
                    (0x90, Some(0)) | (0x80, Some(_)) => Some(EventKind::NoteOff {
                        channel,
                        pitch: first,
                        velocity: second.unwrap_or(0),
                    }),
                    (0x90, Some(v)) => Some(EventKind::NoteOn {
                        channel,
                        pitch: first,
                        velocity: v,
                    }),
                    _ => None,
                };
                if let Some(kind) = kept {
                    events.push(MidiEvent::new(pending, kind));
                    pending = 0;
                }
            }
            0xFF => {
                running = None;
                let meta = r.u8()?;
                let len = r.vlq()? as usize;
                let data = r.take(len)?;
                match meta {
                    0x51 => {
                        if len != 3 {
                            return Err(MidiError::Malformed {
                                offset: status_at,
                                reason: format!("tempo event with length {len}"),
                            });
                        }
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        events.push(MidiEvent::new(pending, EventKind::Tempo(us)));
                        pending = 0;
                    }
                    0x2F => {
                        events.push(MidiEvent::new(pending, EventKind::EndOfTrack));
                        return Ok(events);
                    }
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = r.vlq()? as usize;
                r.take(len)?;
            }
            other => {
                return Err(MidiError::Malformed {
                    offset: status_at,
                    reason: format!("unexpected status byte {other:#04x} in track"),
                });
            }
        }
    }

    // Tolerate tracks that omit the end-of-track meta event.
    events.push(MidiEvent::new(pending, EventKind::EndOfTrack));
    Ok(events)
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7F) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = (value & 0x7F) as u8 | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Serializes a song. One track is written as format 0, more as format 1.
/// Status bytes are always written explicitly (no running status).
pub fn write_midi(song: &MidiSong) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    let format: u16 = if song.tracks.len() == 1 { 0 } else { 1 };
    out.extend_from_slice(&format.to_be_bytes());
    out.extend_from_slice(&(song.tracks.len() as u16).to_be_bytes());
    out.extend_from_slice(&song.ticks_per_quarter.to_be_bytes());

    for track in &song.tracks {
        let mut body = Vec::new();
        let mut ended = false;
        for ev in track {
            write_vlq(&mut body, ev.delta);
            match ev.kind {
                EventKind::NoteOn {
                    channel,
                    pitch,
                    velocity,
                } => body.extend_from_slice(&[0x90 | (channel & 0x0F), pitch & 0x7F, velocity & 0x7F]),
                EventKind::NoteOff {
                    channel,
                    pitch,
                    velocity,
                } => body.extend_from_slice(&[0x80 | (channel & 0x0F), pitch & 0x7F, velocity & 0x7F]),
                EventKind::Tempo(us) => {
                    let b = us.to_be_bytes();
                    body.extend_from_slice(&[0xFF, 0x51, 0x03, b[1], b[2], b[3]]);
                }
                EventKind::EndOfTrack => {
                    body.extend_from_slice(&[0xFF, 0x2F, 0x00]);
                    ended = true;
                    break;
                }
            }
        }
        if !ended {
            body.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);
        }
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    out
}
