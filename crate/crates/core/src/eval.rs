//! Corpus statistics over generated melodies, and log-likelihood
//! normalization across pitch ranges.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midi::{action_pitch, MelodyAction, MelodySequence};
use crate::theory::{
    autocorr, carried_pitch_series, leap_resolution, motif_status, onset_pitches, trailing_repeat_run, MotifStatus,
    TheoryConfig,
};

/// Pitch count of the reference models log-likelihoods are scaled to.
pub const REFERENCE_NOTES: usize = 78;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no melodies to evaluate")]
    Empty,
    #[error("reference note count must be positive")]
    ZeroReference,
    #[error("malformed report: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub notes_repeated_pct: f64,
    pub mean_autocorr_lag1: f64,
    pub mean_autocorr_lag2: f64,
    pub mean_autocorr_lag3: f64,
    pub notes_not_in_key_pct: f64,
    pub melody_starts_tonic_pct: f64,
    pub leaps_resolved_pct: f64,
    pub unique_highest_pct: f64,
    pub unique_lowest_pct: f64,
    pub notes_in_motif_pct: f64,
    pub notes_in_repeated_motif_pct: f64,
    pub song_count: usize,
}

/// `(csv key, table label)` in table order.
const ROWS: [(&str, &str); 11] = [
    ("notes_repeated_pct", "Notes repeated"),
    ("mean_autocorr_lag1", "Mean autocorrelation, lag 1"),
    ("mean_autocorr_lag2", "Mean autocorrelation, lag 2"),
    ("mean_autocorr_lag3", "Mean autocorrelation, lag 3"),
    ("notes_not_in_key_pct", "Notes not in key"),
    ("melody_starts_tonic_pct", "Melody starting with tonic"),
    ("leaps_resolved_pct", "Leaps resolved"),
    ("unique_highest_pct", "Melodies with unique highest note"),
    ("unique_lowest_pct", "Melodies with unique lowest note"),
    ("notes_in_motif_pct", "Notes in motif"),
    ("notes_in_repeated_motif_pct", "Notes in repeated motif"),
];

impl MetricReport {
    pub fn values(&self) -> [f64; 11] {
        [
            self.notes_repeated_pct,
            self.mean_autocorr_lag1,
            self.mean_autocorr_lag2,
            self.mean_autocorr_lag3,
            self.notes_not_in_key_pct,
            self.melody_starts_tonic_pct,
            self.leaps_resolved_pct,
            self.unique_highest_pct,
            self.unique_lowest_pct,
            self.notes_in_motif_pct,
            self.notes_in_repeated_motif_pct,
        ]
    }

    fn from_values(v: [f64; 11], song_count: usize) -> Self {
        Self {
            notes_repeated_pct: v[0],
            mean_autocorr_lag1: v[1],
            mean_autocorr_lag2: v[2],
            mean_autocorr_lag3: v[3],
            notes_not_in_key_pct: v[4],
            melody_starts_tonic_pct: v[5],
            leaps_resolved_pct: v[6],
            unique_highest_pct: v[7],
            unique_lowest_pct: v[8],
            notes_in_motif_pct: v[9],
            notes_in_repeated_motif_pct: v[10],
            song_count,
        }
    }

    /// `metric,value` rows after a header, values in shortest round-trip
    /// form, so [`MetricReport::from_csv`] restores the report exactly.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for ((key, _), v) in ROWS.iter().zip(self.values()) {
            let _ = writeln!(s, "{key},{v:?}");
        }
        let _ = writeln!(s, "song_count,{}", self.song_count);
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines();
        if lines.next() != Some("metric,value") {
            return Err(EvalError::Parse("missing header".into()));
        }
        let mut values = [f64::NAN; 11];
        let mut song_count = None;
        for line in lines.filter(|l| !l.is_empty()) {
            let (key, val) = line
                .split_once(',')
                .ok_or_else(|| EvalError::Parse(format!("bad row {line:?}")))?;
            if key == "song_count" {
                song_count = Some(val.parse().map_err(|_| EvalError::Parse(format!("bad count {val:?}")))?);
                continue;
            }
            let i = ROWS
                .iter()
                .position(|(k, _)| *k == key)
                .ok_or_else(|| EvalError::Parse(format!("unknown metric {key:?}")))?;
            values[i] = val.parse().map_err(|_| EvalError::Parse(format!("bad value {val:?}")))?;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(EvalError::Parse(format!("missing metric {}", ROWS[i].0)));
        }
        let song_count = song_count.ok_or_else(|| EvalError::Parse("missing song_count".into()))?;
        Ok(Self::from_values(values, song_count))
    }

    /// Aligned two-column text table.
    pub fn to_table(&self) -> String {
        let width = ROWS.iter().map(|(_, l)| l.len()).max().unwrap_or(0);
        let mut s = format!("{:<width$}  {:>9}\n", "Metric", "Value");
        for (i, ((_, label), v)) in ROWS.iter().zip(self.values()).enumerate() {
            let cell = if (1..=3).contains(&i) {
                format!("{v:.3}")
            } else {
                format!("{v:.1}%")
            };
            let _ = writeln!(s, "{label:<width$}  {cell:>9}");
        }
        let _ = writeln!(s, "{:<width$}  {:>9}", "Songs", self.song_count);
        s
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn pct(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * hits as f64 / total as f64)
}

/// Per-melody statistics; `None` where the melody has nothing to measure.
struct MelodyStats {
    repeated: Option<f64>,
    autocorr: [f64; 3],
    not_in_key: Option<f64>,
    starts_tonic: Option<bool>,
    leaps_resolved: Option<f64>,
    unique_high: Option<bool>,
    unique_low: Option<bool>,
    in_motif: Option<f64>,
    in_repeated_motif: Option<f64>,
}

fn melody_stats(actions: &[MelodyAction], config: &TheoryConfig) -> MelodyStats {
    let onsets = onset_pitches(actions);
    let series = carried_pitch_series(actions);
    let repeats = onsets.windows(2).filter(|w| w[0] == w[1]).count();
    let leaps: Vec<bool> = onsets
        .windows(3)
        .filter_map(|w| leap_resolution(w[0], w[1], w[2], config.leap_threshold))
        .collect();
    let (hi, lo) = (onsets.iter().max(), onsets.iter().min());
    let mut motif = 0;
    let mut repeated_motif = 0;
    for (j, &a) in actions.iter().enumerate() {
        if action_pitch(a).is_some() {
            match motif_status(&actions[..=j], config.motif_window, config.motif_min_distinct) {
                MotifStatus::None => {}
                MotifStatus::Motif => motif += 1,
                MotifStatus::Repeated => {
                    motif += 1;
                    repeated_motif += 1;
                }
            }
        }
    }
    MelodyStats {
        repeated: pct(repeats, onsets.len().saturating_sub(1)),
        autocorr: [autocorr(&series, 1), autocorr(&series, 2), autocorr(&series, 3)],
        not_in_key: pct(onsets.iter().filter(|&&p| !config.key.contains(p)).count(), onsets.len()),
        starts_tonic: onsets.first().map(|&p| config.key.is_tonic(p)),
        leaps_resolved: pct(leaps.iter().filter(|&&r| r).count(), leaps.len()),
        unique_high: hi.map(|h| onsets.iter().filter(|&p| p == h).count() == 1),
        unique_low: lo.map(|l| onsets.iter().filter(|&p| p == l).count() == 1),
        in_motif: pct(motif, onsets.len()),
        in_repeated_motif: pct(repeated_motif, onsets.len()),
    }
}

/// Averages every metric over songs. Percent-of-notes metrics average only
/// songs where the denominator is non-zero; percent-of-songs metrics count
/// only songs with at least one onset.
pub fn evaluate(melodies: &[MelodySequence], config: &TheoryConfig) -> Result<MetricReport, EvalError> {
    if melodies.is_empty() {
        return Err(EvalError::Empty);
    }
    let stats: Vec<MelodyStats> = melodies.iter().map(|m| melody_stats(m.actions(), config)).collect();
    let avg = |f: &dyn Fn(&MelodyStats) -> Option<f64>| mean(stats.iter().filter_map(f));
    let rate = |f: &dyn Fn(&MelodyStats) -> Option<bool>| {
        mean(stats.iter().filter_map(f).map(|b| if b { 100.0 } else { 0.0 }))
    };
    Ok(MetricReport {
        notes_repeated_pct: avg(&|s| s.repeated),
        mean_autocorr_lag1: mean(stats.iter().map(|s| s.autocorr[0])),
        mean_autocorr_lag2: mean(stats.iter().map(|s| s.autocorr[1])),
        mean_autocorr_lag3: mean(stats.iter().map(|s| s.autocorr[2])),
        notes_not_in_key_pct: avg(&|s| s.not_in_key),
        melody_starts_tonic_pct: rate(&|s| s.starts_tonic),
        leaps_resolved_pct: avg(&|s| s.leaps_resolved),
        unique_highest_pct: rate(&|s| s.unique_high),
        unique_lowest_pct: rate(&|s| s.unique_low),
        notes_in_motif_pct: avg(&|s| s.in_motif),
        notes_in_repeated_motif_pct: avg(&|s| s.in_repeated_motif),
        song_count: melodies.len(),
    })
}

/// Percentage of onsets that extend a same-pitch run past
/// `config.max_repeats`, averaged over songs with onsets.
pub fn excess_repeat_pct(melodies: &[MelodySequence], config: &TheoryConfig) -> f64 {
    mean(melodies.iter().filter_map(|m| {
        let a = m.actions();
        let onset_idx: Vec<usize> = (0..a.len()).filter(|&j| action_pitch(a[j]).is_some()).collect();
        let hits = onset_idx
            .iter()
            .filter(|&&j| trailing_repeat_run(&a[..=j]) > config.max_repeats)
            .count();
        pct(hits, onset_idx.len())
    }))
}

/// Mean over songs of |autocorrelation| at `lag`.
pub fn mean_abs_autocorr(melodies: &[MelodySequence], lag: usize) -> f64 {
    mean(melodies.iter().map(|m| autocorr(&carried_pitch_series(m.actions()), lag).abs()))
}

/// A per-step log-likelihood and its value rescaled to another note count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoglikSummary {
    pub raw: f64,
    pub n_notes_model: usize,
    pub n_notes_reference: usize,
    pub factor: f64,
    pub normalized: f64,
}

/// `raw · n_notes_model / n_notes_reference`.
pub fn normalized_loglik(raw: f64, n_notes_model: usize, n_notes_reference: usize) -> Result<f64, EvalError> {
    Ok(loglik_summary(raw, n_notes_model, n_notes_reference)?.normalized)
}

pub fn loglik_summary(raw: f64, n_notes_model: usize, n_notes_reference: usize) -> Result<LoglikSummary, EvalError> {
    if n_notes_reference == 0 {
        return Err(EvalError::ZeroReference);
    }
    let factor = n_notes_model as f64 / n_notes_reference as f64;
    Ok(LoglikSummary {
        raw,
        n_notes_model,
        n_notes_reference,
        factor,
        normalized: raw * factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{pitch_action, NUM_ACTIONS};
    use crate::theory::Key;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pa(p: u8) -> MelodyAction {
        pitch_action(p).unwrap()
    }

    fn seq(a: Vec<MelodyAction>) -> MelodySequence {
        MelodySequence::new(a).unwrap()
    }

    #[test]
    fn repeated_single_pitch() {
        let r = evaluate(&[seq(vec![pa(64); 8])], &TheoryConfig::default()).unwrap();
        assert_eq!(r.notes_repeated_pct, 100.0);
        assert_eq!(r.unique_highest_pct, 0.0);
        assert_eq!(r.unique_lowest_pct, 0.0);
    }

    #[test]
    fn c_major_scale() {
        let scale = [60, 62, 64, 65, 67, 69, 71, 72].map(pa).to_vec();
        let r = evaluate(&[seq(scale)], &TheoryConfig::default()).unwrap();
        assert_eq!(r.notes_not_in_key_pct, 0.0);
        assert_eq!(r.melody_starts_tonic_pct, 100.0);
        assert_eq!(r.unique_highest_pct, 100.0);
        assert_eq!(r.notes_repeated_pct, 0.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(evaluate(&[], &TheoryConfig::default()), Err(EvalError::Empty));
    }

    #[test]
    fn loglik_normalization() {
        assert!((normalized_loglik(-5.55, 88, 78).unwrap() + 6.262).abs() < 5e-4);
        assert_eq!(normalized_loglik(-3.0, 78, 78).unwrap(), -3.0);
        assert_eq!(normalized_loglik(0.0, 88, 78).unwrap(), 0.0);
        assert_eq!(normalized_loglik(1.0, 88, 0), Err(EvalError::ZeroReference));
    }

    fn random_melodies(n: usize, seed: u64) -> Vec<MelodySequence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let len = rng.gen_range(0..40);
                // bias towards a small pitch set so repeats and motifs occur
                seq((0..len)
                    .map(|_| match rng.gen_range(0..10) {
                        0 => 0,
                        1 | 2 => 1,
                        3..=6 => rng.gen_range(12..20),
                        _ => rng.gen_range(2..NUM_ACTIONS as u8),
                    })
                    .collect())
            })
            .collect()
    }

    #[test]
    fn csv_round_trip_and_table() {
        let r = evaluate(&random_melodies(20, 1), &TheoryConfig::default()).unwrap();
        assert_eq!(MetricReport::from_csv(&r.to_csv()).unwrap(), r);
        assert_eq!(r.to_table().lines().count(), 13);
        assert!(MetricReport::from_csv("metric,value\nnotes_repeated_pct,1\n").is_err());
    }

    #[test]
    fn permutation_invariant() {
        let mut ms = random_melodies(30, 2);
        let cfg = TheoryConfig::default();
        let a = evaluate(&ms, &cfg).unwrap();
        ms.reverse();
        let b = evaluate(&ms, &cfg).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn in_key_melody_has_no_key_penalty_and_no_out_of_key_notes() {
        let cfg = TheoryConfig {
            key: Key::major(2),
            ..TheoryConfig::default()
        };
        let m = [62, 64, 66, 67, 69, 71, 73, 74].map(pa).to_vec();
        for j in 0..m.len() {
            assert_eq!(crate::theory::theory_reward_actions(&m[..j], m[j], &cfg).key, 0.0);
        }
        assert_eq!(evaluate(&[seq(m)], &cfg).unwrap().notes_not_in_key_pct, 0.0);
    }
}
