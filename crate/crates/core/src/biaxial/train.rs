use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{backward_segment, forward_segment, Feedback, LossValue};
use super::params::BiaxialParams;
use super::stack::Dropout;
use super::ModelError;
use crate::midi::NoteStateMatrix;
use crate::neural::{Adadelta, AdadeltaState, ParamSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    /// Steps per training segment, including the first input column.
    pub seq_len: usize,
    pub keep_prob: f64,
    pub feedback: Feedback,
    pub optimizer: Adadelta,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            batch_size: 8,
            seq_len: 128,
            keep_prob: 0.75,
            feedback: Feedback::TeacherForced,
            optimizer: Adadelta::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be positive".into()));
        }
        if self.seq_len < 2 {
            return Err(ModelError::InvalidConfig("seq_len must be at least 2".into()));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(ModelError::InvalidConfig(format!("keep_prob {} not in (0, 1]", self.keep_prob)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: usize,
    pub loss: f64,
    pub loglik: f64,
}

/// Measure-aligned segment start positions of every song long enough for
/// one segment.
fn segment_starts(corpus: &[NoteStateMatrix], seq_len: usize) -> Result<Vec<(usize, usize)>, ModelError> {
    let first = corpus.first().ok_or(ModelError::EmptyCorpus)?;
    let mut starts = Vec::new();
    for (i, song) in corpus.iter().enumerate() {
        if song.n_notes() != first.n_notes() || song.note_low() != first.note_low() {
            return Err(ModelError::ShapeMismatch(format!(
                "song {i} covers a different pitch range than song 0"
            )));
        }
        if song.n_steps() < seq_len {
            warn!("song {i} has {} steps, shorter than a segment of {seq_len}; skipped", song.n_steps());
            continue;
        }
        let stride = song.steps_per_measure().max(1);
        starts.extend((0..=song.n_steps() - seq_len).step_by(stride).map(|s| (i, s)));
    }
    if starts.is_empty() {
        return Err(ModelError::NoSegments { seq_len });
    }
    Ok(starts)
}

/// Gradient and cross-entropy of one segment.
fn segment_gradient(
    params: &BiaxialParams,
    seg: &NoteStateMatrix,
    config: &TrainConfig,
    seeds: (u64, u64),
    scale: f64,
) -> Result<(BiaxialParams, f64), ModelError> {
    let mut drop_rng = ChaCha8Rng::seed_from_u64(seeds.0);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(seeds.1);
    let mut dropout = Dropout::On {
        keep_prob: config.keep_prob,
        rng: &mut drop_rng,
    };
    let pass = forward_segment(params, seg, config.feedback, &mut dropout, &mut sample_rng)?;
    let mut grads = params.zeros_like();
    let ce = backward_segment(params, seg, &pass, scale, &mut grads)?;
    Ok((grads, ce))
}

/// Teacher-forced loss of a batch of equally shaped rolls and its gradient,
/// with dropout off.
pub fn loss_and_gradient(
    params: &BiaxialParams,
    batch: &[NoteStateMatrix],
) -> Result<(LossValue, BiaxialParams), ModelError> {
    let first = batch.first().ok_or(ModelError::EmptyCorpus)?;
    let (n_notes, steps) = (first.n_notes(), first.n_steps());
    if steps < 2 {
        return Err(ModelError::InvalidConfig("segments need at least two steps".into()));
    }
    if batch.iter().any(|m| m.n_notes() != n_notes || m.n_steps() != steps) {
        return Err(ModelError::ShapeMismatch("batch rolls differ in shape".into()));
    }
    let scale = 1.0 / ((steps - 1) * n_notes * batch.len()) as f64;
    let mut grads = params.zeros_like();
    let mut ce_sum = 0.0;
    for seg in batch {
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let pass = forward_segment(
            params,
            seg,
            Feedback::TeacherForced,
            &mut Dropout::<ChaCha8Rng>::Off,
            &mut unused,
        )?;
        ce_sum += backward_segment(params, seg, &pass, scale, &mut grads)?;
    }
    Ok((LossValue::from_sum(ce_sum, n_notes, steps - 1, batch.len()), grads))
}

/// Trains on random measure-aligned segments of `corpus` with Adadelta.
/// Returns the final parameters and one record per iteration, measured on
/// that iteration's batch before the update.
pub fn train<R: Rng + ?Sized>(
    corpus: &[NoteStateMatrix],
    init: BiaxialParams,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(BiaxialParams, Vec<TrainRecord>), ModelError> {
    config.validate()?;
    let starts = segment_starts(corpus, config.seq_len)?;
    let n_notes = corpus[0].n_notes();
    let predicted = config.seq_len - 1;
    let scale = 1.0 / (predicted * n_notes * config.batch_size) as f64;

    let mut params = init;
    let mut states = AdadeltaState::for_params(&params);
    let mut history = Vec::with_capacity(config.iterations);
    for iteration in 0..config.iterations {
        let jobs: Vec<(NoteStateMatrix, (u64, u64))> = (0..config.batch_size)
            .map(|_| {
                let (song, start) = starts[rng.gen_range(0..starts.len())];
                let seeds = (rng.gen(), rng.gen());
                (corpus[song].segment(start, config.seq_len), seeds)
            })
            .collect();
        let results: Vec<Result<(BiaxialParams, f64), ModelError>> = jobs
            .par_iter()
            .map(|(seg, seeds)| segment_gradient(&params, seg, config, *seeds, scale))
            .collect();

        // reduce in batch order so the sum does not depend on scheduling
        let mut grads = params.zeros_like();
        let mut ce_sum = 0.0;
        for r in results {
            let (g, ce) = r?;
            for (acc, t) in grads.tensors_mut().into_iter().zip(g.tensors()) {
                acc.add_scaled(t, 1.0);
            }
            ce_sum += ce;
        }
        let value = LossValue::from_sum(ce_sum, n_notes, predicted, config.batch_size);
        config.optimizer.step(&mut params, &grads, &mut states)?;
        debug!("iteration {iteration}: loss {:.6} loglik {:.4}", value.loss, value.loglik);
        history.push(TrainRecord {
            iteration,
            loss: value.loss,
            loglik: value.loglik,
        });
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biaxial::params::BiaxialShape;

    fn shape() -> BiaxialShape {
        BiaxialShape::new(vec![8], vec![8]).unwrap()
    }

    /// An 8-step figure repeated: two notes alternate on every other step.
    fn constant_pattern(reps: usize) -> NoteStateMatrix {
        let mut m = NoteStateMatrix::zeros(60, 8, 8 * reps, 8);
        for t in 0..8 * reps {
            match t % 8 {
                0 | 1 => m.set(0, t, 1, (t % 8 == 0) as u8),
                4 => m.set(4, t, 1, 1),
                _ => {}
            }
        }
        m.validate().unwrap();
        m
    }

    #[test]
    fn zero_iterations_return_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = BiaxialParams::init(&shape(), &mut rng).unwrap();
        let cfg = TrainConfig {
            iterations: 0,
            seq_len: 8,
            ..TrainConfig::default()
        };
        let (q, hist) = train(&[constant_pattern(2)], p.clone(), &cfg, &mut rng).unwrap();
        assert_eq!(p, q);
        assert!(hist.is_empty());
    }

    #[test]
    fn short_songs_are_skipped_and_all_short_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = BiaxialParams::init(&shape(), &mut rng).unwrap();
        let cfg = TrainConfig {
            iterations: 1,
            seq_len: 64,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&[constant_pattern(2)], p.clone(), &cfg, &mut rng),
            Err(ModelError::NoSegments { seq_len: 64 })
        ));
        assert!(matches!(train(&[], p, &cfg, &mut rng), Err(ModelError::EmptyCorpus)));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let p = BiaxialParams::init(&shape(), &mut rng).unwrap();
            let cfg = TrainConfig {
                iterations: 5,
                batch_size: 3,
                seq_len: 9,
                ..TrainConfig::default()
            };
            train(&[constant_pattern(4)], p, &cfg, &mut rng).unwrap()
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a.flatten(), b.flatten());
        assert_eq!(ha, hb);
    }

    #[test]
    fn learns_a_constant_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = BiaxialParams::init(&shape(), &mut rng).unwrap();
        let cfg = TrainConfig {
            iterations: 200,
            batch_size: 4,
            seq_len: 9,
            keep_prob: 1.0,
            ..TrainConfig::default()
        };
        let (_, hist) = train(&[constant_pattern(4)], p, &cfg, &mut rng).unwrap();
        let baseline = -8.0 * std::f64::consts::LN_2;
        let tail: f64 = hist[190..].iter().map(|r| r.loglik).sum::<f64>() / 10.0;
        let improvement = (tail - baseline) / -baseline;
        assert!(improvement >= 0.5, "improvement {improvement:.3}, final loglik {tail:.4}");
    }
}
