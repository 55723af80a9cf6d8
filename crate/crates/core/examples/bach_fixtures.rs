//! Writes the small Bach corpus under `data/bach/`, transcribed by hand on
//! a sixteenth-note grid.
//!
//! ```text
//! cargo run -p biaxial-core --example bach_fixtures -- data/bach
//! ```

use std::path::PathBuf;

use biaxial_core::midi::{to_midi, write_midi, NoteStateMatrix, DEFAULT_TEMPO_BPM, PIANO_KEYS, PIANO_LOW};

/// `(pitch, start, length)` in sixteenths.
type Note = (u8, usize, usize);

fn render(notes: &[Note], steps_per_measure: usize) -> NoteStateMatrix {
    let end = notes.iter().map(|&(_, s, l)| s + l).max().unwrap_or(0);
    let mut m = NoteStateMatrix::zeros(PIANO_LOW, PIANO_KEYS, end, steps_per_measure);
    for &(p, s, l) in notes {
        let n = (p - PIANO_LOW) as usize;
        m.set(n, s, 1, 1);
        for t in s + 1..s + l {
            m.set(n, t, 1, 0);
        }
    }
    m
}

/// Five-note chords broken as in the C major prelude of the first book of
/// the Well-Tempered Clavier, one chord per bar, each bar's figure twice.
fn prelude() -> Vec<Note> {
    const CHORDS: [[u8; 5]; 19] = [
        [48, 52, 55, 60, 64],
        [48, 50, 57, 62, 65],
        [47, 50, 55, 62, 65],
        [48, 52, 55, 60, 64],
        [48, 52, 57, 64, 69],
        [48, 50, 54, 57, 62],
        [47, 50, 55, 62, 67],
        [47, 48, 52, 55, 60],
        [45, 48, 52, 55, 60],
        [38, 45, 50, 54, 60],
        [43, 47, 50, 55, 59],
        [43, 46, 52, 55, 61],
        [41, 45, 50, 57, 62],
        [41, 44, 50, 53, 59],
        [40, 43, 48, 55, 60],
        [40, 41, 45, 48, 53],
        [38, 41, 45, 48, 53],
        [31, 38, 43, 47, 53],
        [36, 40, 43, 48, 52],
    ];
    let mut out = Vec::new();
    for (bar, c) in CHORDS.iter().enumerate() {
        for half in 0..2 {
            let t = bar * 16 + half * 8;
            out.push((c[0], t, 8));
            out.push((c[1], t + 1, 7));
            for (k, &i) in [2, 3, 4, 2, 3, 4].iter().enumerate() {
                out.push((c[i], t + 2 + k, 1));
            }
        }
    }
    out.push((36, 19 * 16, 16));
    out.push((48, 19 * 16, 16));
    out.push((52, 19 * 16 + 1, 15));
    out.push((55, 19 * 16 + 2, 14));
    out.push((60, 19 * 16 + 3, 13));
    out
}

fn line(bars: &[&[(u8, usize)]], bar_len: usize) -> Vec<Note> {
    let mut out = Vec::new();
    for (b, bar) in bars.iter().enumerate() {
        let mut t = b * bar_len;
        for &(p, l) in bar.iter() {
            if p > 0 {
                out.push((p, t, l));
            }
            t += l;
        }
    }
    out
}

/// The G major minuet from the Anna Magdalena notebook, first strain
/// with its repeat. Three-four time, so twelve sixteenths a bar.
fn minuet() -> Vec<Note> {
    const Q: usize = 4;
    const E: usize = 2;
    let rh: [&[(u8, usize)]; 16] = [
        &[(74, Q), (67, E), (69, E), (71, E), (72, E)],
        &[(74, Q), (67, Q), (67, Q)],
        &[(76, Q), (72, E), (74, E), (76, E), (78, E)],
        &[(79, Q), (67, Q), (67, Q)],
        &[(72, Q), (74, E), (72, E), (71, E), (69, E)],
        &[(71, Q), (72, E), (71, E), (69, E), (67, E)],
        &[(66, Q), (67, E), (69, E), (71, E), (67, E)],
        &[(69, 3 * Q)],
        &[(74, Q), (67, E), (69, E), (71, E), (72, E)],
        &[(74, Q), (67, Q), (67, Q)],
        &[(76, Q), (72, E), (74, E), (76, E), (78, E)],
        &[(79, Q), (67, Q), (67, Q)],
        &[(72, Q), (74, E), (72, E), (71, E), (69, E)],
        &[(71, Q), (72, E), (71, E), (69, E), (67, E)],
        &[(69, Q), (71, E), (69, E), (67, E), (66, E)],
        &[(67, 3 * Q)],
    ];
    let lh: [&[(u8, usize)]; 16] = [
        &[(55, 2 * Q), (57, Q)],
        &[(59, 3 * Q)],
        &[(60, 3 * Q)],
        &[(59, 3 * Q)],
        &[(57, 3 * Q)],
        &[(55, 3 * Q)],
        &[(62, Q), (59, Q), (55, Q)],
        &[(62, Q), (50, E), (60, E), (59, E), (57, E)],
        &[(59, Q), (55, Q), (57, Q)],
        &[(59, 3 * Q)],
        &[(60, 3 * Q)],
        &[(59, 3 * Q)],
        &[(57, 3 * Q)],
        &[(55, 3 * Q)],
        &[(60, Q), (62, Q), (50, Q)],
        &[(55, Q), (43, 2 * Q)],
    ];
    let mut v = line(&rh, 12);
    v.extend(line(&lh, 12));
    v
}

/// Opening bars of the two-part invention in C major.
fn invention() -> Vec<Note> {
    const S: usize = 1;
    const E: usize = 2;
    let rh: [&[(u8, usize)]; 6] = [
        &[(0, S), (72, S), (74, S), (76, S), (77, S), (74, S), (76, S), (72, S), (79, E), (84, E), (83, E), (84, E)],
        &[(86, S), (79, S), (81, S), (83, S), (84, S), (81, S), (83, S), (79, S), (86, E), (91, E), (89, E), (91, E)],
        &[(88, S), (93, S), (91, S), (89, S), (88, S), (91, S), (89, S), (93, S), (91, S), (89, S), (88, S), (86, S), (84, S), (88, S), (86, S), (89, S)],
        &[(88, S), (86, S), (84, S), (83, S), (81, S), (84, S), (83, S), (86, S), (84, S), (83, S), (81, S), (79, S), (78, S), (81, S), (79, S), (83, S)],
        &[(81, E), (74, E), (84, 5 * S), (83, S), (81, S), (79, S), (78, S), (76, S), (79, S), (78, S), (81, S)],
        &[(79, E), (83, E), (84, E), (81, E), (79, 8 * S)],
    ];
    let lh: [&[(u8, usize)]; 6] = [
        &[(0, 8 * S), (0, S), (60, S), (62, S), (64, S), (65, S), (62, S), (64, S), (60, S)],
        &[(67, E), (55, E), (0, 4 * S), (0, S), (67, S), (69, S), (71, S), (72, S), (69, S), (71, S), (67, S)],
        &[(72, E), (71, E), (72, E), (74, E), (76, E), (67, E), (69, E), (71, E)],
        &[(72, E), (64, E), (66, E), (67, E), (69, E), (71, E), (72, 4 * S)],
        &[(66, E), (67, E), (69, E), (62, E), (67, E), (71, E), (69, E), (62, E)],
        &[(67, E), (62, E), (64, E), (66, E), (55, 8 * S)],
    ];
    let mut v = line(&rh, 16);
    v.extend(line(&lh, 16));
    v
}

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/bach".into()));
    std::fs::create_dir_all(&dir)?;
    for (name, notes, spm) in [
        ("prelude_c_major.mid", prelude(), 16),
        ("minuet_g_major.mid", minuet(), 12),
        ("invention_c_major.mid", invention(), 16),
    ] {
        let song = to_midi(&render(&notes, spm), DEFAULT_TEMPO_BPM).expect("valid roll");
        std::fs::write(dir.join(name), write_midi(&song))?;
        println!("{name}: {} notes", notes.len());
    }
    Ok(())
}
