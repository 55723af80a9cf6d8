//! One flat JSON object holding every tunable of a run.
//!
//! Unknown keys are rejected, missing keys take their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biaxial::{BiaxialShape, Feedback, TrainConfig};
use crate::neural::Adadelta;
use crate::rl::{Exploration, TuneConfig};
use crate::theory::{Key, Mode, RewardTable, TheoryConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {key}: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("config parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationKind {
    EpsilonGreedy,
    Boltzmann,
    /// Replays `scripted_actions` in a loop.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Training corpus directory.
    pub data_dir: Option<PathBuf>,
    /// Input checkpoint of `generate`, `tune` and `eval`.
    pub checkpoint: Option<PathBuf>,
    /// Main output file of the command.
    pub out: Option<PathBuf>,

    pub note_low: u8,
    pub n_notes: usize,
    pub steps_per_measure: usize,
    pub tempo_bpm: f64,

    pub time_hidden: Vec<usize>,
    pub note_hidden: Vec<usize>,

    pub iterations: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub keep_prob: f64,
    pub feedback: Feedback,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    pub learning_rate: f64,

    pub generate_steps: usize,

    pub rl_iterations: usize,
    pub gamma: f64,
    pub eta: f64,
    pub c: f64,
    pub rl_batch_size: usize,
    pub replay_capacity: usize,
    pub double_q: bool,
    pub exploration: ExplorationKind,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_anneal_fraction: f64,
    pub temperature: f64,
    pub scripted_actions: Vec<u8>,

    pub key_tonic: u8,
    pub key_mode: Mode,
    pub episode_len: usize,
    pub closing_steps: usize,
    pub autocorr_threshold: f64,
    pub autocorr_window: usize,
    pub max_repeats: usize,
    pub leap_threshold: u8,
    pub octave_limit: u8,
    pub motif_window: usize,
    pub motif_min_distinct: usize,
    pub reward_out_of_key: f64,
    pub reward_tonic: f64,
    pub reward_repeat: f64,
    pub reward_autocorrelation: f64,
    pub reward_good_interval: f64,
    pub reward_bad_interval: f64,
    pub reward_leap_resolved: f64,
    pub reward_leap_unresolved: f64,
    pub reward_unique_extreme: f64,
    pub reward_repeated_extreme: f64,
    pub reward_motif: f64,
    pub reward_repeated_motif: f64,

    pub eval_songs: usize,
    /// Sample the tuned policy greedily instead of by Boltzmann at
    /// `sample_temperature`.
    pub eval_greedy: bool,
    pub sample_temperature: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let tune = TuneConfig::default();
        let theory = TheoryConfig::default();
        let shape = BiaxialShape::default();
        let r = RewardTable::default();
        let (es, ee, ef) = match tune.exploration {
            Exploration::EpsilonGreedy {
                start,
                end,
                anneal_fraction,
            } => (start, end, anneal_fraction),
            _ => unreachable!("default exploration is epsilon-greedy"),
        };
        Self {
            seed: 0,
            data_dir: None,
            checkpoint: None,
            out: None,
            note_low: crate::midi::PIANO_LOW,
            n_notes: crate::midi::PIANO_KEYS,
            steps_per_measure: crate::midi::DEFAULT_STEPS_PER_MEASURE,
            tempo_bpm: crate::midi::DEFAULT_TEMPO_BPM,
            time_hidden: shape.time_hidden,
            note_hidden: shape.note_hidden,
            iterations: train.iterations,
            batch_size: train.batch_size,
            seq_len: train.seq_len,
            keep_prob: train.keep_prob,
            feedback: train.feedback,
            adadelta_rho: train.optimizer.rho,
            adadelta_eps: train.optimizer.eps,
            learning_rate: train.optimizer.lr,
            generate_steps: 128,
            rl_iterations: tune.iterations,
            gamma: tune.gamma,
            eta: tune.eta,
            c: tune.c,
            rl_batch_size: tune.batch_size,
            replay_capacity: tune.replay_capacity,
            double_q: tune.double_q,
            exploration: ExplorationKind::EpsilonGreedy,
            epsilon_start: es,
            epsilon_end: ee,
            epsilon_anneal_fraction: ef,
            temperature: 1.0,
            scripted_actions: Vec::new(),
            key_tonic: theory.key.tonic,
            key_mode: theory.key.mode,
            episode_len: theory.episode_len,
            closing_steps: theory.closing_steps,
            autocorr_threshold: theory.autocorr_threshold,
            autocorr_window: theory.autocorr_window,
            max_repeats: theory.max_repeats,
            leap_threshold: theory.leap_threshold,
            octave_limit: theory.octave_limit,
            motif_window: theory.motif_window,
            motif_min_distinct: theory.motif_min_distinct,
            reward_out_of_key: r.out_of_key,
            reward_tonic: r.tonic,
            reward_repeat: r.repeat,
            reward_autocorrelation: r.autocorrelation,
            reward_good_interval: r.good_interval,
            reward_bad_interval: r.bad_interval,
            reward_leap_resolved: r.leap_resolved,
            reward_leap_unresolved: r.leap_unresolved,
            reward_unique_extreme: r.unique_extreme,
            reward_repeated_extreme: r.repeated_extreme,
            reward_motif: r.motif,
            reward_repeated_motif: r.repeated_motif,
            eval_songs: 1000,
            eval_greedy: false,
            sample_temperature: 1.0,
        }
    }
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_notes == 0 || self.note_low as usize + self.n_notes > 128 {
            return Err(invalid("n_notes", "range must be non-empty and within MIDI 0..127"));
        }
        if self.steps_per_measure == 0 {
            return Err(invalid("steps_per_measure", "must be positive"));
        }
        if !(self.tempo_bpm > 0.0 && self.tempo_bpm.is_finite()) {
            return Err(invalid("tempo_bpm", "must be positive"));
        }
        self.shape().map_err(|e| invalid("time_hidden", e.to_string()))?;
        self.train_config()
            .validate()
            .map_err(|e| invalid("iterations", e.to_string()))?;
        if self.generate_steps == 0 {
            return Err(invalid("generate_steps", "must be positive"));
        }
        if !(self.sample_temperature > 0.0) {
            return Err(invalid("sample_temperature", "must be positive"));
        }
        if self.scripted_actions.iter().any(|&a| a as usize >= crate::midi::NUM_ACTIONS) {
            return Err(invalid("scripted_actions", "actions must lie in 0..38"));
        }
        if self.key_tonic > 11 {
            return Err(invalid("key_tonic", "must be a pitch class 0..=11"));
        }
        self.tune_config()
            .validate()
            .map_err(|e| invalid("gamma", e.to_string()))?;
        Ok(())
    }

    pub fn shape(&self) -> Result<BiaxialShape, crate::biaxial::ModelError> {
        BiaxialShape::new(self.time_hidden.clone(), self.note_hidden.clone())
    }

    pub fn optimizer(&self) -> Adadelta {
        Adadelta {
            rho: self.adadelta_rho,
            eps: self.adadelta_eps,
            lr: self.learning_rate,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            batch_size: self.batch_size,
            seq_len: self.seq_len,
            keep_prob: self.keep_prob,
            feedback: self.feedback,
            optimizer: self.optimizer(),
        }
    }

    pub fn theory_config(&self) -> TheoryConfig {
        TheoryConfig {
            key: Key {
                tonic: self.key_tonic,
                mode: self.key_mode,
            },
            rewards: RewardTable {
                out_of_key: self.reward_out_of_key,
                tonic: self.reward_tonic,
                repeat: self.reward_repeat,
                autocorrelation: self.reward_autocorrelation,
                good_interval: self.reward_good_interval,
                bad_interval: self.reward_bad_interval,
                leap_resolved: self.reward_leap_resolved,
                leap_unresolved: self.reward_leap_unresolved,
                unique_extreme: self.reward_unique_extreme,
                repeated_extreme: self.reward_repeated_extreme,
                motif: self.reward_motif,
                repeated_motif: self.reward_repeated_motif,
            },
            autocorr_threshold: self.autocorr_threshold,
            autocorr_window: self.autocorr_window,
            max_repeats: self.max_repeats,
            leap_threshold: self.leap_threshold,
            octave_limit: self.octave_limit,
            motif_window: self.motif_window,
            motif_min_distinct: self.motif_min_distinct,
            episode_len: self.episode_len,
            closing_steps: self.closing_steps,
        }
    }

    pub fn exploration(&self) -> Exploration {
        match self.exploration {
            ExplorationKind::EpsilonGreedy => Exploration::EpsilonGreedy {
                start: self.epsilon_start,
                end: self.epsilon_end,
                anneal_fraction: self.epsilon_anneal_fraction,
            },
            ExplorationKind::Boltzmann => Exploration::Boltzmann {
                temperature: self.temperature,
            },
            ExplorationKind::Scripted => Exploration::Scripted {
                actions: self.scripted_actions.clone(),
            },
        }
    }

    pub fn tune_config(&self) -> TuneConfig {
        TuneConfig {
            iterations: self.rl_iterations,
            gamma: self.gamma,
            eta: self.eta,
            c: self.c,
            batch_size: self.rl_batch_size,
            replay_capacity: self.replay_capacity,
            double_q: self.double_q,
            exploration: self.exploration(),
            optimizer: self.optimizer(),
            theory: self.theory_config(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(c.theory_config(), TheoryConfig::default());
        assert_eq!(c.tune_config(), TuneConfig::default());
        assert_eq!(c.train_config(), TrainConfig::default());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_json(r#"{"gamma": 0.25, "time_hidden": [8]}"#).unwrap();
        assert_eq!(c.gamma, 0.25);
        assert_eq!(c.time_hidden, vec![8]);
        assert_eq!(c.eta, 0.01);
        let c = RunConfig::from_json(r#"{"exploration": "scripted", "scripted_actions": [2, 1], "out": "x.ckpt"}"#).unwrap();
        assert_eq!(c.exploration(), Exploration::Scripted { actions: vec![2, 1] });
        assert_eq!(c.out, Some(PathBuf::from("x.ckpt")));
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in [
            r#"{"gamma": 1.0}"#,
            r#"{"keep_prob": 0.0}"#,
            r#"{"keep_prob": 1.5}"#,
            r#"{"c": 0.0}"#,
            r#"{"n_notes": 0}"#,
            r#"{"note_low": 100, "n_notes": 40}"#,
            r#"{"time_hidden": []}"#,
            r#"{"key_tonic": 12}"#,
            r#"{"exploration": "scripted"}"#,
            r#"{"exploration": "scripted", "scripted_actions": [38]}"#,
            r#"{"no_such_key": 1}"#,
        ] {
            assert!(RunConfig::from_json(text).is_err(), "{text}");
        }
    }
}
