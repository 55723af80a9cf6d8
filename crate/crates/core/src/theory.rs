//! Music-theory rules over monophonic melodies.
//!
//! The predicates here are the single definition of every rule; the
//! per-step reward and the corpus metrics are both built on them.

use serde::{Deserialize, Serialize};

use crate::midi::{action_pitch, MelodyAction, MelodySequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Major,
    Minor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Key {
    /// Pitch class of the tonic, 0 = C.
    pub tonic: u8,
    pub mode: Mode,
}

impl Key {
    pub const C_MAJOR: Key = Key {
        tonic: 0,
        mode: Mode::Major,
    };

    pub fn major(tonic: u8) -> Self {
        Key {
            tonic: tonic % 12,
            mode: Mode::Major,
        }
    }

    pub fn minor(tonic: u8) -> Self {
        Key {
            tonic: tonic % 12,
            mode: Mode::Minor,
        }
    }

    /// Natural minor for `Minor`.
    pub fn contains(&self, pitch: u8) -> bool {
        const MAJOR: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
        const MINOR: [u8; 7] = [0, 2, 3, 5, 7, 8, 10];
        let degree = (pitch + 12 - self.tonic) % 12;
        match self.mode {
            Mode::Major => MAJOR.contains(&degree),
            Mode::Minor => MINOR.contains(&degree),
        }
    }

    pub fn is_tonic(&self, pitch: u8) -> bool {
        pitch % 12 == self.tonic
    }
}

/// Signed reward magnitudes of every rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    pub out_of_key: f64,
    pub tonic: f64,
    pub repeat: f64,
    pub autocorrelation: f64,
    pub good_interval: f64,
    pub bad_interval: f64,
    pub leap_resolved: f64,
    pub leap_unresolved: f64,
    pub unique_extreme: f64,
    pub repeated_extreme: f64,
    pub motif: f64,
    pub repeated_motif: f64,
}

impl Default for RewardTable {
    fn default() -> Self {
        Self {
            out_of_key: -1.0,
            tonic: 3.0,
            repeat: -1.0,
            autocorrelation: -3.0,
            good_interval: 0.5,
            bad_interval: -1.0,
            leap_resolved: 1.0,
            leap_unresolved: -1.0,
            unique_extreme: 1.0,
            repeated_extreme: -1.0,
            motif: 1.0,
            repeated_motif: 4.0,
        }
    }
}

impl RewardTable {
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            out_of_key: self.out_of_key * lambda,
            tonic: self.tonic * lambda,
            repeat: self.repeat * lambda,
            autocorrelation: self.autocorrelation * lambda,
            good_interval: self.good_interval * lambda,
            bad_interval: self.bad_interval * lambda,
            leap_resolved: self.leap_resolved * lambda,
            leap_unresolved: self.leap_unresolved * lambda,
            unique_extreme: self.unique_extreme * lambda,
            repeated_extreme: self.repeated_extreme * lambda,
            motif: self.motif * lambda,
            repeated_motif: self.repeated_motif * lambda,
        }
    }

    fn values(&self) -> [f64; 12] {
        [
            self.out_of_key,
            self.tonic,
            self.repeat,
            self.autocorrelation,
            self.good_interval,
            self.bad_interval,
            self.leap_resolved,
            self.leap_unresolved,
            self.unique_extreme,
            self.repeated_extreme,
            self.motif,
            self.repeated_motif,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub key: Key,
    pub rewards: RewardTable,
    pub autocorr_threshold: f64,
    /// Autocorrelation is measured over this many trailing steps.
    pub autocorr_window: usize,
    pub max_repeats: usize,
    pub leap_threshold: u8,
    pub octave_limit: u8,
    pub motif_window: usize,
    pub motif_min_distinct: usize,
    /// Melody length the tonic rule measures its closing steps against.
    pub episode_len: usize,
    /// Number of closing steps. The first tonic onset among them is
    /// rewarded, later ones are not.
    pub closing_steps: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            key: Key::C_MAJOR,
            rewards: RewardTable::default(),
            autocorr_threshold: 0.15,
            autocorr_window: 16,
            max_repeats: 4,
            leap_threshold: 7,
            octave_limit: 12,
            motif_window: 8,
            motif_min_distinct: 3,
            episode_len: 32,
            closing_steps: 4,
        }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.autocorr_threshold > 0.0) {
            return Err("autocorr_threshold must be positive".into());
        }
        if self.rewards.values().iter().any(|v| !v.is_finite()) {
            return Err("reward magnitudes must be finite".into());
        }
        if self.max_repeats == 0 || self.leap_threshold == 0 || self.octave_limit == 0 {
            return Err("max_repeats, leap_threshold and octave_limit must be positive".into());
        }
        if self.motif_window == 0 || self.autocorr_window < 2 {
            return Err("windows too small".into());
        }
        if self.key.tonic > 11 {
            return Err("tonic must be a pitch class 0..=11".into());
        }
        Ok(())
    }
}

/// Per-rule reward contributions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub key: f64,
    pub tonic: f64,
    pub repeat: f64,
    pub autocorrelation: f64,
    pub interval: f64,
    pub leap_resolution: f64,
    pub extrema: f64,
    pub motif: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn contributions(&self) -> [f64; 8] {
        [
            self.key,
            self.tonic,
            self.repeat,
            self.autocorrelation,
            self.interval,
            self.leap_resolution,
            self.extrema,
            self.motif,
        ]
    }
}

// ---- shared predicates ----

/// Pitches of the onset actions, in order.
pub fn onset_pitches(actions: &[MelodyAction]) -> Vec<u8> {
    actions.iter().filter_map(|&a| action_pitch(a)).collect()
}

/// One pitch per step: onsets give their pitch, holds and rests repeat the
/// last onset. Steps before the first onset are left out.
pub fn carried_pitch_series(actions: &[MelodyAction]) -> Vec<f64> {
    let mut last: Option<u8> = None;
    let mut out = Vec::with_capacity(actions.len());
    for &a in actions {
        if let Some(p) = action_pitch(a) {
            last = Some(p);
        }
        if let Some(p) = last {
            out.push(p as f64);
        }
    }
    out
}

/// Pearson correlation of `series[..L−k]` with `series[k..]`. Zero when the
/// series is too short or either slice is constant.
pub fn autocorr(series: &[f64], lag: usize) -> f64 {
    let n = series.len();
    if lag == 0 || n <= lag + 1 {
        return 0.0;
    }
    let (a, b) = (&series[..n - lag], &series[lag..]);
    let m = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / m, b.iter().sum::<f64>() / m);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Length of the run of equal onset pitches ending at the last onset of
/// `actions`. Holds and rests neither extend nor break a run.
pub fn trailing_repeat_run(actions: &[MelodyAction]) -> usize {
    let onsets = onset_pitches(actions);
    let Some(&last) = onsets.last() else {
        return 0;
    };
    onsets.iter().rev().take_while(|&&p| p == last).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalClass {
    /// Unison, thirds, fourth, fifth, minor sixth or octave.
    Good,
    /// Tritone or major seventh.
    Clumsy,
    /// Wider than the octave limit.
    TooWide,
    Neutral,
}

pub fn interval_class(from: u8, to: u8, octave_limit: u8) -> IntervalClass {
    let d = from.abs_diff(to);
    if d > octave_limit {
        IntervalClass::TooWide
    } else if d == 6 || d == 11 {
        IntervalClass::Clumsy
    } else if [0, 3, 4, 5, 7, 8, 12].contains(&d) {
        IntervalClass::Good
    } else {
        IntervalClass::Neutral
    }
}

/// After a leap `p2 → p1` of at least `threshold` semitones, whether `p`
/// moves back the other way. `None` when `p2 → p1` is not a leap.
pub fn leap_resolution(p2: u8, p1: u8, p: u8, threshold: u8) -> Option<bool> {
    if p2.abs_diff(p1) < threshold {
        return None;
    }
    let leap = p1 as i16 - p2 as i16;
    let next = p as i16 - p1 as i16;
    Some(leap.signum() * next.signum() < 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotifStatus {
    None,
    Motif,
    /// A motif whose pitch sequence already occurred before the window.
    Repeated,
}

/// Motif test on the last `window` actions of `actions`.
pub fn motif_status(actions: &[MelodyAction], window: usize, min_distinct: usize) -> MotifStatus {
    let start = actions.len().saturating_sub(window);
    let motif = onset_pitches(&actions[start..]);
    let mut distinct = motif.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < min_distinct {
        return MotifStatus::None;
    }
    let earlier = onset_pitches(&actions[..start]);
    if earlier.windows(motif.len()).any(|w| w == motif.as_slice()) {
        MotifStatus::Repeated
    } else {
        MotifStatus::Motif
    }
}

/// Evaluates every rule on the melody `history ⊕ action`.
pub fn theory_reward(history: &MelodySequence, action: MelodyAction, config: &TheoryConfig) -> RewardBreakdown {
    theory_reward_actions(history.actions(), action, config)
}

pub(crate) fn theory_reward_actions(history: &[MelodyAction], action: MelodyAction, config: &TheoryConfig) -> RewardBreakdown {
    let r = &config.rewards;
    let mut melody = Vec::with_capacity(history.len() + 1);
    melody.extend_from_slice(history);
    melody.push(action);
    let pos = history.len();
    let mut b = RewardBreakdown::default();

    let series = carried_pitch_series(&melody);
    let tail = &series[series.len().saturating_sub(config.autocorr_window)..];
    for lag in 1..=3 {
        if autocorr(tail, lag).abs() > config.autocorr_threshold {
            b.autocorrelation += r.autocorrelation;
        }
    }

    if let Some(p) = action_pitch(action) {
        if !config.key.contains(p) {
            b.key = r.out_of_key;
        }
        // the closing condition is met by one tonic anywhere in the window
        let window = config.episode_len.saturating_sub(config.closing_steps);
        let closing = pos >= window
            && pos < config.episode_len
            && !history[window.min(pos)..]
                .iter()
                .any(|&a| action_pitch(a).is_some_and(|q| config.key.is_tonic(q)));
        if config.key.is_tonic(p) && (pos == 0 || closing) {
            b.tonic = r.tonic;
        }
        if trailing_repeat_run(&melody) > config.max_repeats {
            b.repeat = r.repeat;
        }
        let prev = onset_pitches(history);
        if let Some(&p1) = prev.last() {
            b.interval = match interval_class(p1, p, config.octave_limit) {
                IntervalClass::Good => r.good_interval,
                IntervalClass::Clumsy | IntervalClass::TooWide => r.bad_interval,
                IntervalClass::Neutral => 0.0,
            };
            let hi = *prev.iter().max().expect("non-empty");
            let lo = *prev.iter().min().expect("non-empty");
            b.extrema += match p.cmp(&hi) {
                std::cmp::Ordering::Greater => r.unique_extreme,
                std::cmp::Ordering::Equal => r.repeated_extreme,
                std::cmp::Ordering::Less => 0.0,
            };
            b.extrema += match p.cmp(&lo) {
                std::cmp::Ordering::Less => r.unique_extreme,
                std::cmp::Ordering::Equal => r.repeated_extreme,
                std::cmp::Ordering::Greater => 0.0,
            };
        }
        if prev.len() >= 2 {
            let (p2, p1) = (prev[prev.len() - 2], prev[prev.len() - 1]);
            b.leap_resolution = match leap_resolution(p2, p1, p, config.leap_threshold) {
                Some(true) => r.leap_resolved,
                Some(false) => r.leap_unresolved,
                None => 0.0,
            };
        }
        b.motif = match motif_status(&melody, config.motif_window, config.motif_min_distinct) {
            MotifStatus::None => 0.0,
            MotifStatus::Motif => r.motif,
            MotifStatus::Repeated => r.motif + r.repeated_motif,
        };
    }
    b.total = b.contributions().iter().sum();
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{pitch_action, NO_EVENT};
    use proptest::prelude::*;

    fn pa(p: u8) -> MelodyAction {
        pitch_action(p).unwrap()
    }

    fn seq(a: &[MelodyAction]) -> MelodySequence {
        MelodySequence::new(a.to_vec()).unwrap()
    }

    /// Textbook two-pass Pearson correlation.
    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn autocorr_closed_forms() {
        assert_eq!(autocorr(&[3.0; 10], 1), 0.0);
        let lin: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        assert!((autocorr(&lin, 1) - 1.0).abs() < 1e-12);
        let alt: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((autocorr(&alt, 1) + 1.0).abs() < 1e-12);
        assert_eq!(autocorr(&[1.0, 2.0], 1), 0.0);
        let s = [60.0, 64.0, 62.0, 67.0, 65.0, 60.0, 59.0, 72.0, 64.0];
        for k in 1..=3 {
            assert!((autocorr(&s, k) - pearson(&s[..9 - k], &s[k..])).abs() < 1e-12);
        }
    }

    #[test]
    fn key_membership() {
        let cfg = TheoryConfig::default();
        let b = theory_reward(&seq(&[pa(60)]), pa(66), &cfg);
        assert_eq!(b.key, -1.0);
        let g = TheoryConfig {
            key: Key::major(7),
            ..TheoryConfig::default()
        };
        assert_eq!(theory_reward(&seq(&[pa(60)]), pa(66), &g).key, 0.0);
        assert!(Key::minor(9).contains(72) && !Key::minor(9).contains(73));
    }

    #[test]
    fn fifth_repeat_is_penalised() {
        let cfg = TheoryConfig::default();
        let a = pa(55);
        assert_eq!(theory_reward(&seq(&[a, a, a, a]), a, &cfg).repeat, -1.0);
        assert_eq!(theory_reward(&seq(&[a, a, a]), a, &cfg).repeat, 0.0);
        // holds and rests between onsets do not break the run
        assert_eq!(theory_reward(&seq(&[a, 1, a, 0, a, 1, 1, a]), a, &cfg).repeat, -1.0);
        assert_eq!(theory_reward(&seq(&[a, a, a, a]), 1, &cfg).repeat, 0.0);
        assert_eq!(theory_reward(&seq(&[a, a, a, a]), 0, &cfg).repeat, 0.0);
    }

    #[test]
    fn period_two_alternation_fires_autocorrelation() {
        let cfg = TheoryConfig::default();
        let h: Vec<MelodyAction> = (0..9).map(|i| if i % 2 == 0 { pa(60) } else { pa(67) }).collect();
        let b = theory_reward(&seq(&h), pa(67), &cfg);
        let s = carried_pitch_series(&[h.clone(), vec![pa(67)]].concat());
        assert!((autocorr(&s, 2) - 1.0).abs() < 1e-12);
        assert!((pearson(&s[..s.len() - 2], &s[2..]) - 1.0).abs() < 1e-12);
        // lags 1, 2 and 3 are all ±1 on a period-two series
        assert_eq!(b.autocorrelation, -9.0);
    }

    #[test]
    fn interval_classes() {
        assert_eq!(interval_class(60, 67, 12), IntervalClass::Good);
        assert_eq!(interval_class(60, 66, 12), IntervalClass::Clumsy);
        assert_eq!(interval_class(60, 71, 12), IntervalClass::Clumsy);
        assert_eq!(interval_class(60, 73, 12), IntervalClass::TooWide);
        assert_eq!(interval_class(60, 62, 12), IntervalClass::Neutral);
    }

    #[test]
    fn leap_resolution_direction() {
        assert_eq!(leap_resolution(60, 67, 65, 7), Some(true));
        assert_eq!(leap_resolution(60, 67, 69, 7), Some(false));
        assert_eq!(leap_resolution(72, 64, 65, 7), Some(true));
        assert_eq!(leap_resolution(60, 62, 50, 7), None);
    }

    #[test]
    fn motif_detection() {
        let m = [pa(60), pa(62), pa(64), 1, pa(60), pa(62), pa(64), 1];
        assert_eq!(motif_status(&m, 8, 3), MotifStatus::Motif);
        let twice = [&m[..], &m[..]].concat();
        assert_eq!(motif_status(&twice, 8, 3), MotifStatus::Repeated);
        assert_eq!(motif_status(&[pa(60), pa(62), 1, 1], 8, 3), MotifStatus::None);
    }

    #[test]
    fn total_is_sum_and_pure() {
        let cfg = TheoryConfig::default();
        let h = seq(&[pa(60), pa(72), 1, pa(59), pa(61), 0, pa(66)]);
        let b = theory_reward(&h, pa(61), &cfg);
        assert_eq!(b.total, b.contributions().iter().sum::<f64>());
        assert_eq!(b, theory_reward(&h, pa(61), &cfg));
    }

    fn melody_strategy() -> impl Strategy<Value = Vec<MelodyAction>> {
        prop::collection::vec(0u8..38, 0..40)
    }

    proptest! {
        #[test]
        fn scaling_the_table_scales_every_contribution(h in melody_strategy(), a in 0u8..38, lambda in 0.1f64..5.0) {
            let cfg = TheoryConfig::default();
            let scaled = TheoryConfig { rewards: cfg.rewards.scaled(lambda), ..cfg.clone() };
            let b = theory_reward_actions(&h, a, &cfg);
            let s = theory_reward_actions(&h, a, &scaled);
            for (x, y) in b.contributions().iter().zip(s.contributions()) {
                prop_assert!((x * lambda - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
            prop_assert!((b.total * lambda - s.total).abs() <= 1e-9 * (1.0 + s.total.abs()));
        }

        #[test]
        fn key_sign_follows_membership(h in melody_strategy(), a in 2u8..38) {
            let cfg = TheoryConfig::default();
            let b = theory_reward_actions(&h, a, &cfg);
            let p = action_pitch(a).unwrap();
            if cfg.key.contains(p) {
                prop_assert!(b.key >= 0.0);
            } else {
                prop_assert!(b.key < 0.0);
            }
        }

        #[test]
        fn holds_and_rests_never_repeat(h in melody_strategy(), a in 0u8..2) {
            prop_assert_eq!(theory_reward_actions(&h, a, &TheoryConfig::default()).repeat, 0.0);
        }
    }

    #[test]
    fn closing_tonic_rewarded_once() {
        let cfg = TheoryConfig::default();
        let mut h = vec![pa(62); 28];
        h[27] = NO_EVENT;
        assert_eq!(theory_reward_actions(&h, pa(60), &cfg).tonic, 3.0);
        h.push(pa(60));
        h.push(pa(64));
        assert_eq!(theory_reward_actions(&h, pa(72), &cfg).tonic, 0.0);
        assert_eq!(theory_reward_actions(&h[..27], pa(60), &cfg).tonic, 0.0);
        assert_eq!(theory_reward_actions(&[], pa(48), &cfg).tonic, 3.0);
    }
}
