//! Loading a directory of MIDI files as training rolls.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::midi::{
    extract_melody, parse_midi, quantize, MidiError, NoteStateMatrix, MELODY_LOW, MELODY_PITCHES,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Midi { path: PathBuf, source: MidiError },
}

/// `.mid` and `.midi` files directly under `dir`, sorted by name so runs do
/// not depend on directory order.
pub fn midi_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_roll(path: &Path, note_low: u8, n_notes: usize, steps_per_measure: usize) -> Result<NoteStateMatrix, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_midi(&bytes)
        .and_then(|song| quantize(&song, note_low, n_notes, steps_per_measure))
        .map_err(|source| CorpusError::Midi {
            path: path.to_path_buf(),
            source,
        })
}

/// Every parseable file of `dir`. Files that fail are logged and skipped.
pub fn load_dir(dir: &Path, note_low: u8, n_notes: usize, steps_per_measure: usize) -> Result<Vec<NoteStateMatrix>, CorpusError> {
    let files = midi_files(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for f in files {
        match load_roll(&f, note_low, n_notes, steps_per_measure) {
            Ok(m) => out.push(m),
            Err(e) => log::warn!("skipping {e}"),
        }
    }
    Ok(out)
}

/// Top-voice melodies of a corpus, rendered on the melody range.
pub fn melody_rolls(corpus: &[NoteStateMatrix]) -> Vec<NoteStateMatrix> {
    corpus
        .iter()
        .map(|m| extract_melody(m).to_matrix(MELODY_LOW, MELODY_PITCHES, m.steps_per_measure()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{to_midi, write_midi};

    #[test]
    fn loads_sorted_and_skips_junk() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = NoteStateMatrix::zeros(21, 88, 8, 16);
        m.set(39, 0, 1, 1);
        m.set(39, 1, 1, 0);
        let bytes = write_midi(&to_midi(&m, 120.0).unwrap());
        std::fs::write(dir.path().join("b.mid"), &bytes).unwrap();
        std::fs::write(dir.path().join("a.MID"), &bytes).unwrap();
        std::fs::write(dir.path().join("c.mid"), b"junk").unwrap();
        std::fs::write(dir.path().join("notes.txt"), b"x").unwrap();
        let names: Vec<_> = midi_files(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
            .collect();
        assert_eq!(names, ["a.MID", "b.mid", "c.mid"]);
        let rolls = load_dir(dir.path(), 21, 88, 16).unwrap();
        assert_eq!(rolls.len(), 2);
        assert_eq!(rolls[0].pair(39, 0), (1, 1));
        let mel = melody_rolls(&rolls);
        assert_eq!(mel[0].n_notes(), MELODY_PITCHES);
        assert_eq!(mel[0].pair((60 - MELODY_LOW) as usize, 0), (1, 1));
    }
}
