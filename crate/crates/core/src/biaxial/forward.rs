use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::BiaxialParams;
use super::stack::{stack_backward, stack_forward, Dropout, StackTape};
use super::ModelError;
use crate::kernel::{expand, NoteStateExpand};
use crate::midi::NoteStateMatrix;
use crate::neural::{dot, sigmoid};

/// Timewise outputs, indexed `[note][step][unit]`.
pub type Hidden = Vec<Vec<Vec<f64>>>;

/// Pre-sigmoid (play, articulate) scores, `N × T × 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    n_notes: usize,
    n_steps: usize,
    data: Vec<f64>,
}

impl Logits {
    pub fn zeros(n_notes: usize, n_steps: usize) -> Self {
        Self {
            n_notes,
            n_steps,
            data: vec![0.0; n_notes * n_steps * 2],
        }
    }

    pub fn n_notes(&self) -> usize {
        self.n_notes
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn get(&self, n: usize, t: usize) -> [f64; 2] {
        let i = (n * self.n_steps + t) * 2;
        [self.data[i], self.data[i + 1]]
    }

    pub fn set(&mut self, n: usize, t: usize, l: [f64; 2]) {
        let i = (n * self.n_steps + t) * 2;
        self.data[i] = l[0];
        self.data[i + 1] = l[1];
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// What the note axis sees as the pair of the note below.
#[derive(Debug, Clone, Copy)]
pub enum NoteFeedback<'a> {
    /// Column `t` is fed `given.pair(n − 1, t)`.
    Given(&'a NoteStateMatrix),
    /// The pair just sampled for note `n − 1`.
    Sample,
}

/// Training-time choice of note-axis feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    #[default]
    TeacherForced,
    Sampled,
}

pub(crate) fn project(params: &BiaxialParams, h: &[f64]) -> [f64; 2] {
    let b = params.out_b.data();
    [b[0] + dot(params.out_w.row(0), h), b[1] + dot(params.out_w.row(1), h)]
}

/// Draws a pair from its logits. Play off forces articulate off, and a note
/// that was silent on the previous step is articulated when it starts.
pub(crate) fn sample_pair<R: Rng + ?Sized>(l: [f64; 2], prev_play: u8, rng: &mut R) -> (u8, u8) {
    let p = rng.gen::<f64>() < sigmoid(l[0]);
    let a = rng.gen::<f64>() < sigmoid(l[1]);
    match (p, prev_play) {
        (false, _) => (0, 0),
        (true, 0) => (1, 1),
        (true, _) => (1, a as u8),
    }
}

/// Runs the timewise stack along the steps of every note.
pub fn timewise_pass<R: Rng + ?Sized>(
    params: &BiaxialParams,
    features: &NoteStateExpand,
    dropout: &mut Dropout<'_, R>,
) -> Result<Hidden, ModelError> {
    (0..features.n_notes())
        .map(|n| {
            stack_forward(&params.time, features.n_steps(), None, dropout, |t, _| features.get(n, t).to_vec())
                .map(|(outs, _)| outs)
                .map_err(ModelError::from)
        })
        .collect()
}

/// Runs the note axis at every step of `hidden`, returning the logits and
/// the sampled roll. With [`NoteFeedback::Sample`] the roll is a valid
/// generation; with `Given` the samples are drawn but not fed back.
pub fn notewise_pass<R: Rng + ?Sized, D: Rng + ?Sized>(
    params: &BiaxialParams,
    hidden: &Hidden,
    feedback: NoteFeedback<'_>,
    note_low: u8,
    steps_per_measure: usize,
    dropout: &mut Dropout<'_, D>,
    rng: &mut R,
) -> Result<(Logits, NoteStateMatrix), ModelError> {
    let n_notes = hidden.len();
    let n_steps = hidden.first().map_or(0, |h| h.len());
    if let NoteFeedback::Given(m) = feedback {
        if m.n_notes() != n_notes || m.n_steps() != n_steps {
            return Err(ModelError::ShapeMismatch(format!(
                "feedback roll is {}×{}, hidden is {n_notes}×{n_steps}",
                m.n_notes(),
                m.n_steps()
            )));
        }
    }
    let mut logits = Logits::zeros(n_notes, n_steps);
    let mut roll = NoteStateMatrix::zeros(note_low, n_notes, n_steps, steps_per_measure);
    for t in 0..n_steps {
        let mut sampled: Vec<(u8, u8)> = Vec::with_capacity(n_notes);
        let prev_play = |n: usize, roll: &NoteStateMatrix| if t == 0 { 0 } else { roll.play(n, t - 1) };
        let (outs, _) = stack_forward(&params.note, n_notes, None, dropout, |n, prev_out| {
            if let Some(h) = prev_out {
                let l = project(params, h);
                sampled.push(sample_pair(l, prev_play(n - 1, &roll), rng));
            }
            let (p, a) = match (n, feedback) {
                (0, _) => (0, 0),
                (_, NoteFeedback::Given(m)) => m.pair(n - 1, t),
                (_, NoteFeedback::Sample) => sampled[n - 1],
            };
            let mut x = hidden[n][t].clone();
            x.push(p as f64);
            x.push(a as f64);
            x
        })?;
        let l = project(params, outs.last().expect("at least one note"));
        sampled.push(sample_pair(l, prev_play(n_notes - 1, &roll), rng));
        for (n, h) in outs.iter().enumerate() {
            logits.set(n, t, project(params, h));
            roll.set(n, t, sampled[n].0, sampled[n].1);
        }
    }
    Ok((logits, roll))
}

/// Sigmoid cross-entropy of one pair and its gradient on the logits. The
/// articulation term is dropped when the target is not played.
pub(crate) fn pair_loss(l: [f64; 2], target: (u8, u8)) -> (f64, [f64; 2]) {
    let ce = |x: f64, y: f64| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
    let (p, a) = (target.0 as f64, target.1 as f64);
    let mut loss = ce(l[0], p);
    let mut g = [sigmoid(l[0]) - p, 0.0];
    if target.0 == 1 {
        loss += ce(l[1], a);
        g[1] = sigmoid(l[1]) - a;
    }
    (loss, g)
}

/// Summed cross-entropy of logits columns `0..T−1` against target columns
/// `1..T`.
pub(crate) fn cross_entropy_sum(logits: &Logits, target: &NoteStateMatrix) -> f64 {
    let tp = target.n_steps() - 1;
    let mut sum = 0.0;
    for n in 0..target.n_notes() {
        for t in 0..tp {
            sum += pair_loss(logits.get(n, t), target.pair(n, t + 1)).0;
        }
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    /// Mean cross-entropy per (segment, step, note).
    pub loss: f64,
    /// Summed log-likelihood of one step, averaged over segments and steps.
    pub loglik: f64,
}

impl LossValue {
    pub(crate) fn from_sum(ce_sum: f64, n_notes: usize, predicted_steps: usize, batch: usize) -> Self {
        let per_step = ce_sum / (predicted_steps * batch) as f64;
        Self {
            loss: per_step / n_notes as f64,
            loglik: -per_step,
        }
    }
}

/// Loss of a batch. Logits at step `t` predict the target at `t + 1`, so
/// the last logits column is unused.
pub fn loss(logits: &[Logits], batch: &[NoteStateMatrix]) -> Result<LossValue, ModelError> {
    let first = batch.first().ok_or(ModelError::EmptyCorpus)?;
    if logits.len() != batch.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} logits for {} targets",
            logits.len(),
            batch.len()
        )));
    }
    let (nn, nt) = (first.n_notes(), first.n_steps());
    if nt < 2 {
        return Err(ModelError::ShapeMismatch("targets need at least two steps".into()));
    }
    let mut sum = 0.0;
    for (l, m) in logits.iter().zip(batch) {
        if m.n_notes() != nn || m.n_steps() != nt || l.n_notes() != nn || l.n_steps() != nt {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {nn}×{nt}, got logits {}×{} and target {}×{}",
                l.n_notes(),
                l.n_steps(),
                m.n_notes(),
                m.n_steps()
            )));
        }
        sum += cross_entropy_sum(l, m);
    }
    Ok(LossValue::from_sum(sum, nn, nt - 1, batch.len()))
}

/// Everything the backward pass of one training segment needs.
pub(crate) struct SegmentPass {
    pub logits: Logits,
    tw_tapes: Vec<StackTape>,
    nw_tapes: Vec<StackTape>,
    /// Masked top notewise outputs, `[step][note]`.
    nw_tops: Vec<Vec<Vec<f64>>>,
}

/// Training forward over a segment: inputs are columns `0..T−1`, logits
/// predict columns `1..T`.
pub(crate) fn forward_segment<R: Rng + ?Sized, S: Rng + ?Sized>(
    params: &BiaxialParams,
    seg: &NoteStateMatrix,
    feedback: Feedback,
    dropout: &mut Dropout<'_, R>,
    sample_rng: &mut S,
) -> Result<SegmentPass, ModelError> {
    let (nn, tp) = (seg.n_notes(), seg.n_steps() - 1);
    let features = expand(&seg.segment(0, tp));
    let mut tw_out: Hidden = Vec::with_capacity(nn);
    let mut tw_tapes = Vec::with_capacity(nn);
    for n in 0..nn {
        let (outs, tape) = stack_forward(&params.time, tp, None, dropout, |t, _| features.get(n, t).to_vec())?;
        tw_out.push(outs);
        tw_tapes.push(tape);
    }

    let mut logits = Logits::zeros(nn, tp);
    let mut nw_tapes = Vec::with_capacity(tp);
    let mut nw_tops = Vec::with_capacity(tp);
    for t in 0..tp {
        let mut below = (0u8, 0u8);
        let (outs, tape) = stack_forward(&params.note, nn, None, dropout, |n, prev_out| {
            if n > 0 {
                below = match feedback {
                    Feedback::TeacherForced => seg.pair(n - 1, t + 1),
                    Feedback::Sampled => {
                        let l = project(params, prev_out.expect("previous note output"));
                        sample_pair(l, seg.play(n - 1, t), sample_rng)
                    }
                };
            }
            let mut x = tw_out[n][t].clone();
            x.push(below.0 as f64);
            x.push(below.1 as f64);
            x
        })?;
        for (n, h) in outs.iter().enumerate() {
            logits.set(n, t, project(params, h));
        }
        nw_tapes.push(tape);
        nw_tops.push(outs);
    }
    Ok(SegmentPass {
        logits,
        tw_tapes,
        nw_tapes,
        nw_tops,
    })
}

/// Backward of `scale · Σ cross-entropy` for one segment. Returns the
/// unscaled cross-entropy sum.
pub(crate) fn backward_segment(
    params: &BiaxialParams,
    seg: &NoteStateMatrix,
    pass: &SegmentPass,
    scale: f64,
    grads: &mut BiaxialParams,
) -> Result<f64, ModelError> {
    let (nn, tp) = (seg.n_notes(), seg.n_steps() - 1);
    let ht = params.time_top();
    let mut ce_sum = 0.0;
    let mut d_tw: Hidden = vec![vec![Vec::new(); tp]; nn];
    for t in 0..tp {
        let mut d_tops = Vec::with_capacity(nn);
        for n in 0..nn {
            let (ce, g) = pair_loss(pass.logits.get(n, t), seg.pair(n, t + 1));
            ce_sum += ce;
            let g = [g[0] * scale, g[1] * scale];
            let h = &pass.nw_tops[t][n];
            let mut dh = vec![0.0; h.len()];
            for (k, &gk) in g.iter().enumerate() {
                if gk != 0.0 {
                    grads.out_b.data_mut()[k] += gk;
                    crate::neural::axpy(grads.out_w.row_mut(k), gk, h);
                    crate::neural::axpy(&mut dh, gk, params.out_w.row(k));
                }
            }
            d_tops.push(dh);
        }
        let dxs = stack_backward(&params.note, &pass.nw_tapes[t], d_tops, &mut grads.note)?;
        for (n, mut dx) in dxs.into_iter().enumerate() {
            dx.truncate(ht);
            d_tw[n][t] = dx;
        }
    }
    for (n, d) in d_tw.into_iter().enumerate() {
        stack_backward(&params.time, &pass.tw_tapes[n], d, &mut grads.time)?;
    }
    Ok(ce_sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biaxial::params::BiaxialShape;
    use crate::neural::gradcheck::max_relative_error;
    use crate::neural::{lstm_step, ParamSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(seed: u64, th: Vec<usize>, nh: Vec<usize>) -> BiaxialParams {
        let s = BiaxialShape::new(th, nh).unwrap();
        let mut p = BiaxialParams::init(&s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        // larger weights make every path matter in the checks below
        for t in p.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= 2.0);
        }
        p
    }

    fn random_roll(nn: usize, nt: usize, low: u8, seed: u64) -> NoteStateMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = NoteStateMatrix::zeros(low, nn, nt, 16);
        for n in 0..nn {
            for t in 0..nt {
                let p = rng.gen_bool(0.4) as u8;
                let a = if p == 1 && (t == 0 || m.play(n, t - 1) == 0) {
                    1
                } else {
                    p & rng.gen_bool(0.5) as u8
                };
                m.set(n, t, p, a);
            }
        }
        m
    }

    fn off() -> Dropout<'static, ChaCha8Rng> {
        Dropout::Off
    }

    #[test]
    fn one_step_timewise_is_one_lstm_step() {
        let p = small(1, vec![5], vec![3]);
        let m = random_roll(6, 1, 40, 2);
        let f = expand(&m);
        let h = timewise_pass(&p, &f, &mut off()).unwrap();
        for n in 0..6 {
            let (h1, _) = lstm_step(&p.time[0], f.get(n, 0), &[0.0; 5], &[0.0; 5]).unwrap();
            assert_eq!(h[n][0], h1);
        }
    }

    #[test]
    fn timewise_matches_per_note_loop() {
        let p = small(3, vec![4, 3], vec![3]);
        let m = random_roll(3, 4, 50, 4);
        let f = expand(&m);
        let h = timewise_pass(&p, &f, &mut off()).unwrap();
        for n in 0..3 {
            let mut s = [(vec![0.0; 4], vec![0.0; 4]), (vec![0.0; 3], vec![0.0; 3])];
            for t in 0..4 {
                let (h0, c0) = lstm_step(&p.time[0], f.get(n, t), &s[0].0, &s[0].1).unwrap();
                let (h1, c1) = lstm_step(&p.time[1], &h0, &s[1].0, &s[1].1).unwrap();
                for k in 0..3 {
                    assert!((h[n][t][k] - h1[k]).abs() < 1e-12);
                }
                s = [(h0, c0), (h1, c1)];
            }
        }
    }

    #[test]
    fn permuting_notes_permutes_timewise_outputs() {
        let p = small(5, vec![4], vec![3]);
        let f = expand(&random_roll(5, 3, 60, 6));
        let h = timewise_pass(&p, &f, &mut off()).unwrap();
        // each note's sequence alone gives the same result
        for n in [4, 0, 2] {
            let alone = stack_forward::<ChaCha8Rng, _>(&p.time, 3, None, &mut off(), |t, _| f.get(n, t).to_vec())
                .unwrap()
                .0;
            assert_eq!(alone, h[n]);
        }
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let p = BiaxialParams::zeros(&BiaxialShape::new(vec![3], vec![2]).unwrap()).unwrap();
        let f = expand(&random_roll(4, 3, 60, 1));
        let h = timewise_pass(&p, &f, &mut off()).unwrap();
        let (l, roll) = notewise_pass(
            &p,
            &h,
            NoteFeedback::Sample,
            60,
            16,
            &mut off(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert!(l.data().iter().all(|&v| v == 0.0));
        roll.validate().unwrap();
    }

    /// Scalar re-derivation of the note axis for a 1-layer notewise stack
    /// with sampled feedback.
    #[test]
    fn notewise_matches_scalar_reference() {
        let p = small(8, vec![3], vec![4]);
        let f = expand(&random_roll(4, 2, 60, 9));
        let h = timewise_pass(&p, &f, &mut off()).unwrap();
        let (l, roll) = notewise_pass(
            &p,
            &h,
            NoteFeedback::Sample,
            60,
            16,
            &mut off(),
            &mut ChaCha8Rng::seed_from_u64(10),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut prev_col = vec![0u8; 4];
        for t in 0..2 {
            let (mut hs, mut cs) = (vec![0.0; 4], vec![0.0; 4]);
            let mut below = (0u8, 0u8);
            for n in 0..4 {
                let mut x = h[n][t].clone();
                x.extend([below.0 as f64, below.1 as f64]);
                let (h1, c1) = lstm_step(&p.note[0], &x, &hs, &cs).unwrap();
                let w = p.out_w.data();
                let b = p.out_b.data();
                let lp = b[0] + (0..4).map(|k| w[k] * h1[k]).sum::<f64>();
                let la = b[1] + (0..4).map(|k| w[4 + k] * h1[k]).sum::<f64>();
                assert!((l.get(n, t)[0] - lp).abs() < 1e-12);
                assert!((l.get(n, t)[1] - la).abs() < 1e-12);
                let u1: f64 = rng.gen();
                let u2: f64 = rng.gen();
                let play = u1 < sig(lp);
                let pair = if !play {
                    (0, 0)
                } else if prev_col[n] == 0 {
                    (1, 1)
                } else {
                    (1, (u2 < sig(la)) as u8)
                };
                assert_eq!(roll.pair(n, t), pair);
                below = pair;
                hs = h1;
                cs = c1;
            }
            prev_col = (0..4).map(|n| roll.play(n, t)).collect();
        }
    }

    #[test]
    fn sampled_pairs_never_articulate_silence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..10_000 {
            let l = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let (p, a) = sample_pair(l, (i % 2) as u8, &mut rng);
            assert!(!(p == 0 && a == 1));
        }
    }

    #[test]
    fn perfect_logits_give_near_zero_loss() {
        let m = random_roll(5, 6, 60, 11);
        let mut l = Logits::zeros(5, 6);
        for n in 0..5 {
            for t in 0..5 {
                let (p, a) = m.pair(n, t + 1);
                l.set(n, t, [if p == 1 { 30.0 } else { -30.0 }, if a == 1 { 30.0 } else { -30.0 }]);
            }
        }
        assert!(loss(&[l], &[m]).unwrap().loss < 1e-9);
    }

    #[test]
    fn random_baseline_is_n_ln2() {
        let m = NoteStateMatrix::zeros(21, 88, 8, 16);
        let v = loss(&[Logits::zeros(88, 8)], &[m]).unwrap();
        assert!((v.loglik + 88.0 * std::f64::consts::LN_2).abs() < 1e-9);
        assert!((v.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_scalar_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let batch: Vec<NoteStateMatrix> = (0..2).map(|s| random_roll(3, 2, 60, 20 + s)).collect();
        let logits: Vec<Logits> = (0..2)
            .map(|_| {
                let mut l = Logits::zeros(3, 2);
                for n in 0..3 {
                    for t in 0..2 {
                        l.set(n, t, [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]);
                    }
                }
                l
            })
            .collect();
        let mut sum = 0.0;
        for (l, m) in logits.iter().zip(&batch) {
            for n in 0..3 {
                let [lp, la] = l.get(n, 0);
                let (p, a) = m.pair(n, 1);
                let sp = 1.0 / (1.0 + (-lp).exp());
                let sa = 1.0 / (1.0 + (-la).exp());
                sum -= if p == 1 { sp.ln() } else { (1.0 - sp).ln() };
                if p == 1 {
                    sum -= if a == 1 { sa.ln() } else { (1.0 - sa).ln() };
                }
            }
        }
        let v = loss(&logits, &batch).unwrap();
        assert!((v.loglik + sum / 2.0).abs() < 1e-12);
        assert!((v.loss - sum / 6.0).abs() < 1e-12);
    }

    #[test]
    fn masked_articulation_logit_is_ignored() {
        let m = random_roll(4, 5, 60, 13);
        let mut l = Logits::zeros(4, 5);
        let base = loss(&[l.clone()], &[m.clone()]).unwrap();
        let (n, t) = (0..4)
            .flat_map(|n| (0..4).map(move |t| (n, t)))
            .find(|&(n, t)| m.play(n, t + 1) == 0)
            .unwrap();
        l.set(n, t, [0.0, 123.0]);
        assert_eq!(loss(&[l], &[m]).unwrap(), base);
    }

    #[test]
    fn shifted_targets_change_the_loss() {
        let p = small(14, vec![4], vec![3]);
        let m = random_roll(6, 8, 60, 15);
        let f = expand(&m);
        let h = timewise_pass(&p, &f, &mut off()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (l, _) = notewise_pass(&p, &h, NoteFeedback::Sample, 60, 16, &mut off(), &mut rng).unwrap();
        let aligned = loss(&[l.clone()], &[m.clone()]).unwrap();
        // pretend the logits predict the same step instead of the next one
        let mut same = NoteStateMatrix::zeros(60, 6, 8, 16);
        for n in 0..6 {
            for t in 0..7 {
                let (a, b) = m.pair(n, t);
                same.set(n, t + 1, a, b);
            }
        }
        assert_ne!(loss(&[l], &[same]).unwrap(), aligned);
    }

    fn segment_loss(p: &BiaxialParams, seg: &NoteStateMatrix) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = forward_segment(p, seg, Feedback::TeacherForced, &mut off(), &mut rng).unwrap();
        let tp = seg.n_steps() - 1;
        cross_entropy_sum(&pass.logits, seg) / (tp * seg.n_notes()) as f64
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let p = small(21, vec![8], vec![8]);
        let seg = random_roll(8, 4, 56, 22);
        let tp = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = forward_segment(&p, &seg, Feedback::TeacherForced, &mut off(), &mut rng).unwrap();
        let mut g = p.zeros_like();
        backward_segment(&p, &seg, &pass, 1.0 / (tp * 8) as f64, &mut g).unwrap();
        let f = |z: &[f64]| {
            let mut q = p.clone();
            q.assign_flat(z);
            segment_loss(&q, &seg)
        };
        let err = max_relative_error(f, &p.flatten(), &g.flatten(), 1e-5);
        assert!(err < 1e-4, "max rel err {err:e}");
    }

    #[test]
    fn two_layer_gradient_with_dropout_matches_finite_differences() {
        let p = small(31, vec![4, 3], vec![3, 2]);
        let seg = random_roll(5, 4, 60, 32);
        let run = |q: &BiaxialParams| {
            let mut drng = ChaCha8Rng::seed_from_u64(5);
            let mut d = Dropout::On {
                keep_prob: 0.75,
                rng: &mut drng,
            };
            let mut srng = ChaCha8Rng::seed_from_u64(6);
            forward_segment(q, &seg, Feedback::TeacherForced, &mut d, &mut srng).unwrap()
        };
        let pass = run(&p);
        let mut g = p.zeros_like();
        backward_segment(&p, &seg, &pass, 1.0, &mut g).unwrap();
        let f = |z: &[f64]| {
            let mut q = p.clone();
            q.assign_flat(z);
            cross_entropy_sum(&run(&q).logits, &seg)
        };
        let err = max_relative_error(f, &p.flatten(), &g.flatten(), 1e-5);
        assert!(err < 1e-4, "max rel err {err:e}");
    }
}
