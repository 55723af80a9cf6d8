//! Inputs shared by the benchmarks.

use biaxial_core::midi::{NoteStateMatrix, PIANO_KEYS, PIANO_LOW};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A full-range roll where each key sounds with probability `density` and
/// sustained notes are held for a few steps.
pub fn random_roll(seed: u64, steps: usize, density: f64) -> NoteStateMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = NoteStateMatrix::zeros(PIANO_LOW, PIANO_KEYS, steps, 16);
    for n in 0..PIANO_KEYS {
        for t in 0..steps {
            if rng.gen_bool(density) {
                let held = t > 0 && m.play(n, t - 1) == 1 && rng.gen_bool(0.6);
                m.set(n, t, 1, (!held) as u8);
            }
        }
    }
    m
}
