//! The bi-axial model seen as a monophonic melody policy, and the
//! Q-network built on top of it.

use std::f64::consts::LN_2;
use std::sync::Arc;

use rand::Rng;

use super::dqn::{choose_action, ActionPolicy, QFunction};
use super::RlError;
use crate::biaxial::{
    project, stack_backward, stack_forward, stack_step, zero_state, BiaxialParams, Dropout, StackTape,
    TimewiseMemory,
};
use crate::kernel::{expand_column, FEATURE_WIDTH};
use crate::midi::{
    action_pitch, MelodyAction, MelodySequence, MELODY_HIGH, MELODY_LOW, NOTE_OFF, NO_EVENT, NUM_ACTIONS,
};
use crate::neural::{dot, log_sigmoid, sigmoid, ParamSet, Tensor};

/// Bi-axial parameters together with the pitch range they were trained on.
/// The range must cover every melody pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct MelodyNet {
    pub params: BiaxialParams,
    pub note_low: u8,
    pub n_notes: usize,
}

/// What the melody policy conditions on: the timewise memory before this
/// step, the previous action, the note still sounding and the step index.
#[derive(Debug, Clone)]
pub struct MelodyState {
    pub memory: Arc<TimewiseMemory>,
    pub last: MelodyAction,
    pub sounding: Option<u8>,
    pub step: usize,
}

impl MelodyState {
    /// Start of an episode: nothing has played.
    pub fn initial(net: &MelodyNet) -> Self {
        Self {
            memory: Arc::new(TimewiseMemory::zeros(&net.params, net.n_notes)),
            last: NO_EVENT,
            sounding: None,
            step: 0,
        }
    }

    /// State after playing `action`, given the memory that consumed this
    /// state's column.
    pub fn next(&self, action: MelodyAction, memory: TimewiseMemory) -> Self {
        Self {
            memory: Arc::new(memory),
            last: action,
            sounding: next_sounding(self.sounding, action),
            step: self.step + 1,
        }
    }
}

pub fn next_sounding(sounding: Option<u8>, action: MelodyAction) -> Option<u8> {
    match action {
        NOTE_OFF => None,
        NO_EVENT => sounding,
        a => action_pitch(a),
    }
}

/// Log-domain score of each melody action from per-note logits.
///
/// A pitch action scores `log σ(l) + log σ(a)` of its note and a hold of
/// the sounding note `log σ(l) + log(1 − σ(a))`. Silence scores the sum of
/// `log(1 − σ(l))` over melody notes; in silence that mass is shared by
/// hold and note-off, with note-off halved.
pub fn projection_scores(logits: &[[f64; 2]], note_low: u8, sounding: Option<u8>) -> [f64; NUM_ACTIONS] {
    let idx = |p: u8| (p - note_low) as usize;
    let silence: f64 = (MELODY_LOW..=MELODY_HIGH).map(|p| log_sigmoid(-logits[idx(p)][0])).sum();
    let mut s = [0.0; NUM_ACTIONS];
    for (k, v) in s.iter_mut().enumerate().skip(2) {
        let l = logits[idx(action_pitch(k as u8).unwrap())];
        *v = log_sigmoid(l[0]) + log_sigmoid(l[1]);
    }
    match sounding {
        Some(m) => {
            let l = logits[idx(m)];
            s[NO_EVENT as usize] = log_sigmoid(l[0]) + log_sigmoid(-l[1]);
            s[NOTE_OFF as usize] = silence;
        }
        None => {
            s[NO_EVENT as usize] = silence;
            s[NOTE_OFF as usize] = silence - LN_2;
        }
    }
    s
}

/// Gradient of `Σ_k ds[k] · score_k` on the logits.
pub fn projection_backward(
    logits: &[[f64; 2]],
    note_low: u8,
    sounding: Option<u8>,
    ds: &[f64; NUM_ACTIONS],
) -> Vec<[f64; 2]> {
    let idx = |p: u8| (p - note_low) as usize;
    let mut d = vec![[0.0; 2]; logits.len()];
    let silence_weight = ds[NOTE_OFF as usize]
        + match sounding {
            Some(_) => 0.0,
            None => ds[NO_EVENT as usize],
        };
    for p in MELODY_LOW..=MELODY_HIGH {
        d[idx(p)][0] -= silence_weight * sigmoid(logits[idx(p)][0]);
    }
    for (k, &g) in ds.iter().enumerate().skip(2) {
        let i = idx(action_pitch(k as u8).unwrap());
        d[i][0] += g * sigmoid(-logits[i][0]);
        d[i][1] += g * sigmoid(-logits[i][1]);
    }
    if let Some(m) = sounding {
        let (i, g) = (idx(m), ds[NO_EVENT as usize]);
        d[i][0] += g * sigmoid(-logits[i][0]);
        d[i][1] -= g * sigmoid(logits[i][1]);
    }
    d
}

impl MelodyNet {
    pub fn new(params: BiaxialParams, note_low: u8, n_notes: usize) -> Result<Self, RlError> {
        let high = note_low as usize + n_notes;
        if note_low > MELODY_LOW || high <= MELODY_HIGH as usize || high > 128 {
            return Err(RlError::Range(format!(
                "notes {note_low}..{high} do not cover the melody range {MELODY_LOW}..={MELODY_HIGH}"
            )));
        }
        Ok(Self {
            params,
            note_low,
            n_notes,
        })
    }

    /// Column fed to the timewise axis for a state.
    pub fn column(&self, last: MelodyAction, sounding: Option<u8>) -> Vec<(u8, u8)> {
        let mut col = vec![(0, 0); self.n_notes];
        if let Some(p) = sounding {
            col[(p - self.note_low) as usize] = if last == NO_EVENT { (1, 0) } else { (1, 1) };
        }
        col
    }

    /// Inference: the action scores at `state` and the timewise memory
    /// after consuming its column. The note axis sees zero feedback.
    pub fn step(&self, state: &MelodyState) -> Result<([f64; NUM_ACTIONS], TimewiseMemory), RlError> {
        let mut memory = (*state.memory).clone();
        let tops = memory.advance(&self.params, &self.column(state.last, state.sounding), self.note_low, state.step)?;
        let mut ns = zero_state(&self.params.note);
        let mut logits = Vec::with_capacity(self.n_notes);
        for top in &tops {
            let mut x = top.clone();
            x.extend_from_slice(&[0.0, 0.0]);
            let h = stack_step(&self.params.note, &x, &mut ns)?;
            logits.push(project(&self.params, &h));
        }
        Ok((projection_scores(&logits, self.note_low, state.sounding), memory))
    }

    /// Normalized log-probabilities of the 38 actions and the next memory.
    pub fn log_probs(&self, state: &MelodyState) -> Result<([f64; NUM_ACTIONS], TimewiseMemory), RlError> {
        let (s, memory) = self.step(state)?;
        Ok((log_softmax(&s), memory))
    }
}

pub fn log_softmax(s: &[f64; NUM_ACTIONS]) -> [f64; NUM_ACTIONS] {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    s.map(|v| v - lse)
}

/// `log p(action | state)` under a melody network.
pub fn melody_log_prob(net: &MelodyNet, state: &MelodyState, action: MelodyAction) -> Result<f64, RlError> {
    Ok(net.log_probs(state)?.0[action as usize])
}

/// Q-network: the melody network's scores followed by a 38 × 38 affine
/// head. The head starts as the identity, so the initial Q values are the
/// primed model's scores.
#[derive(Debug, Clone, PartialEq)]
pub struct MelodyQ {
    pub net: MelodyNet,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

pub struct MelodyQCache {
    time_tapes: Vec<StackTape>,
    note_tape: StackTape,
    note_outs: Vec<Vec<f64>>,
    logits: Vec<[f64; 2]>,
    scores: [f64; NUM_ACTIONS],
    sounding: Option<u8>,
}

impl MelodyQ {
    pub fn from_primed(net: MelodyNet) -> Self {
        let mut head_w = Tensor::zeros(&[NUM_ACTIONS, NUM_ACTIONS]);
        for k in 0..NUM_ACTIONS {
            head_w.row_mut(k)[k] = 1.0;
        }
        Self {
            net,
            head_w,
            head_b: Tensor::zeros(&[NUM_ACTIONS]),
        }
    }

    fn head(&self, scores: &[f64; NUM_ACTIONS]) -> Vec<f64> {
        (0..NUM_ACTIONS)
            .map(|k| self.head_b.data()[k] + dot(self.head_w.row(k), scores))
            .collect()
    }

    /// Q values at `state` and the memory for the successor state.
    pub fn evaluate(&self, state: &MelodyState) -> Result<(Vec<f64>, TimewiseMemory), RlError> {
        let (s, memory) = self.net.step(state)?;
        Ok((self.head(&s), memory))
    }
}

impl ParamSet for MelodyQ {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.net.params.tensors();
        v.push(&self.head_w);
        v.push(&self.head_b);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.net.params.tensors_mut();
        v.push(&mut self.head_w);
        v.push(&mut self.head_b);
        v
    }
}

impl QFunction for MelodyQ {
    type State = MelodyState;
    type Cache = MelodyQCache;

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn q_values(&self, state: &MelodyState) -> Result<Vec<f64>, RlError> {
        Ok(self.evaluate(state)?.0)
    }

    fn forward(&self, state: &MelodyState) -> Result<(Vec<f64>, MelodyQCache), RlError> {
        let net = &self.net;
        let p = &net.params;
        let col = net.column(state.last, state.sounding);
        let features = expand_column(&col, net.note_low, state.step);
        let mut tops = Vec::with_capacity(net.n_notes);
        let mut time_tapes = Vec::with_capacity(net.n_notes);
        for (n, x) in features.chunks_exact(FEATURE_WIDTH).enumerate() {
            let (mut outs, tape) = stack_forward::<rand_chacha::ChaCha8Rng, _>(
                &p.time,
                1,
                Some(&state.memory.notes[n]),
                &mut Dropout::Off,
                |_, _| x.to_vec(),
            )?;
            tops.push(outs.pop().expect("one step"));
            time_tapes.push(tape);
        }
        let (note_outs, note_tape) =
            stack_forward::<rand_chacha::ChaCha8Rng, _>(&p.note, net.n_notes, None, &mut Dropout::Off, |n, _| {
                let mut x = tops[n].clone();
                x.extend_from_slice(&[0.0, 0.0]);
                x
            })?;
        let logits: Vec<[f64; 2]> = note_outs.iter().map(|h| project(p, h)).collect();
        let scores = projection_scores(&logits, net.note_low, state.sounding);
        let q = self.head(&scores);
        Ok((
            q,
            MelodyQCache {
                time_tapes,
                note_tape,
                note_outs,
                logits,
                scores,
                sounding: state.sounding,
            },
        ))
    }

    fn backward(&self, cache: &MelodyQCache, action: usize, dq: f64, grads: &mut Self) -> Result<(), RlError> {
        let p = &self.net.params;
        for (g, s) in grads.head_w.row_mut(action).iter_mut().zip(&cache.scores) {
            *g += dq * s;
        }
        grads.head_b.data_mut()[action] += dq;
        let mut ds = [0.0; NUM_ACTIONS];
        for (d, w) in ds.iter_mut().zip(self.head_w.row(action)) {
            *d = dq * w;
        }
        let dlogits = projection_backward(&cache.logits, self.net.note_low, cache.sounding, &ds);

        let g = &mut grads.net.params;
        let mut d_note_outs = Vec::with_capacity(dlogits.len());
        for (dl, h) in dlogits.iter().zip(&cache.note_outs) {
            let mut dh = vec![0.0; h.len()];
            for k in 0..2 {
                for (gw, hv) in g.out_w.row_mut(k).iter_mut().zip(h) {
                    *gw += dl[k] * hv;
                }
                g.out_b.data_mut()[k] += dl[k];
                for (d, w) in dh.iter_mut().zip(p.out_w.row(k)) {
                    *d += dl[k] * w;
                }
            }
            d_note_outs.push(dh);
        }
        let dx = stack_backward(&p.note, &cache.note_tape, d_note_outs, &mut g.note)?;
        let top = p.time_top();
        for (tape, d) in cache.time_tapes.iter().zip(dx) {
            stack_backward(&p.time, tape, vec![d[..top].to_vec()], &mut g.time)?;
        }
        Ok(())
    }

    fn zeros_like(&self) -> Self {
        Self {
            net: MelodyNet {
                params: self.net.params.zeros_like(),
                ..self.net.clone()
            },
            head_w: self.head_w.zeros_like(),
            head_b: self.head_b.zeros_like(),
        }
    }
}

/// A policy that produces melodies one action at a time.
pub enum MelodyPolicy<'a> {
    /// Samples the primed network's own distribution.
    Primed(&'a MelodyNet),
    /// Chooses from the Q values, greedily or by Boltzmann sampling.
    Tuned(&'a MelodyQ, ActionPolicy),
}

/// Samples a melody of `len` steps from a fresh episode start.
pub fn sample_melody<R: Rng + ?Sized>(
    policy: &MelodyPolicy<'_>,
    len: usize,
    rng: &mut R,
) -> Result<MelodySequence, RlError> {
    let net = match policy {
        MelodyPolicy::Primed(n) => *n,
        MelodyPolicy::Tuned(q, _) => &q.net,
    };
    let mut state = MelodyState::initial(net);
    let mut actions = Vec::with_capacity(len);
    for _ in 0..len {
        let (a, memory) = match policy {
            MelodyPolicy::Primed(n) => {
                // softmax of the scores is the policy itself
                let (s, memory) = n.step(&state)?;
                (choose_action(&s, ActionPolicy::Boltzmann(1.0), rng), memory)
            }
            MelodyPolicy::Tuned(q, policy) => {
                let (qv, memory) = q.evaluate(&state)?;
                (choose_action(&qv, *policy, rng), memory)
            }
        };
        let a = a as MelodyAction;
        actions.push(a);
        state = state.next(a, memory);
    }
    Ok(MelodySequence::new(actions)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biaxial::BiaxialShape;
    use crate::neural::gradcheck::max_relative_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64, hidden: usize) -> MelodyNet {
        let shape = BiaxialShape::new(vec![hidden, hidden], vec![hidden, hidden]).unwrap();
        let params = BiaxialParams::init(&shape, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        MelodyNet::new(params, MELODY_LOW, 36).unwrap()
    }

    fn walk(net: &MelodyNet, actions: &[MelodyAction]) -> MelodyState {
        let mut s = MelodyState::initial(net);
        for &a in actions {
            let (_, m) = net.step(&s).unwrap();
            s = s.next(a, m);
        }
        s
    }

    #[test]
    fn log_probs_normalize() {
        let n = net(1, 6);
        for acts in [&[][..], &[10, 1, 1], &[10, 0, 1, 20]] {
            let s = walk(&n, acts);
            let (lp, _) = n.log_probs(&s).unwrap();
            let total: f64 = lp.iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-12, "{total}");
        }
    }

    #[test]
    fn range_must_cover_melody() {
        let p = net(1, 4).params;
        assert!(MelodyNet::new(p.clone(), 49, 40).is_err());
        assert!(MelodyNet::new(p.clone(), 48, 35).is_err());
        assert!(MelodyNet::new(p, 21, 88).is_ok());
    }

    #[test]
    fn zero_logits_projection() {
        // σ(0) = 1/2 everywhere: every pitch action scores 2 ln ½
        let l = vec![[0.0, 0.0]; 36];
        let s = projection_scores(&l, 48, None);
        for &v in &s[2..] {
            assert!((v - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        }
        assert!((s[1] - 36.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!((s[0] - s[1] + LN_2).abs() < 1e-12);
    }

    #[test]
    fn projection_backward_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let flat: Vec<f64> = (0..80).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let w: [f64; NUM_ACTIONS] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        for sounding in [None, Some(60)] {
            let to_pairs = |z: &[f64]| z.chunks(2).map(|c| [c[0], c[1]]).collect::<Vec<_>>();
            let f = |z: &[f64]| dot(&projection_scores(&to_pairs(z), 46, sounding), &w);
            let analytic: Vec<f64> = projection_backward(&to_pairs(&flat), 46, sounding, &w)
                .into_iter()
                .flatten()
                .collect();
            assert!(max_relative_error(f, &flat, &analytic, 1e-6) < 1e-6);
        }
    }

    #[test]
    fn identity_head_reproduces_scores() {
        let n = net(2, 5);
        let q = MelodyQ::from_primed(n.clone());
        let s = walk(&n, &[20, 1, 0]);
        let (scores, _) = n.step(&s).unwrap();
        let (qv, _) = q.evaluate(&s).unwrap();
        assert_eq!(qv, scores.to_vec());
        let (qf, _) = q.forward(&s).unwrap();
        for (a, b) in qf.iter().zip(&qv) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn q_backward_matches_finite_differences() {
        let n = net(4, 4);
        let mut q = MelodyQ::from_primed(n.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for v in q.head_w.data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
        let s = walk(&n, &[14, 1, 30]);
        let action = 30;
        let (_, cache) = q.forward(&s).unwrap();
        let mut g = q.zeros_like();
        q.backward(&cache, action, 1.0, &mut g).unwrap();
        let f = |z: &[f64]| {
            let mut p = q.clone();
            p.assign_flat(z);
            p.forward(&s).unwrap().0[action]
        };
        let err = max_relative_error(f, &q.flatten(), &g.flatten(), 1e-5);
        assert!(err < 1e-4, "max rel err {err:e}");
    }

    #[test]
    fn sampled_melodies_are_reproducible() {
        let n = net(5, 4);
        let q = MelodyQ::from_primed(n.clone());
        let a = sample_melody(&MelodyPolicy::Primed(&n), 16, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = sample_melody(&MelodyPolicy::Tuned(&q, ActionPolicy::Boltzmann(1.0)), 16, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.len(), 16);
        // identical distributions and identical draws
        assert_eq!(a, b);
    }

    #[test]
    fn zero_model_distribution() {
        let shape = BiaxialShape::new(vec![3], vec![3]).unwrap();
        let n = MelodyNet::new(BiaxialParams::zeros(&shape).unwrap(), MELODY_LOW, 36).unwrap();
        let (lp, _) = n.log_probs(&MelodyState::initial(&n)).unwrap();
        // pitches score 2 ln ½, silence 36 ln ½, note-off one ln 2 lower
        let h = 0.5f64.ln();
        let lse = (36.0 * (2.0 * h).exp() + (36.0 * h).exp() + (37.0 * h).exp()).ln();
        for &v in &lp[2..] {
            assert!((v - (2.0 * h - lse)).abs() < 1e-12);
        }
        assert!((lp[1] - (36.0 * h - lse)).abs() < 1e-12);
        assert!((lp[0] - (37.0 * h - lse)).abs() < 1e-12);
    }

    #[test]
    fn step_matches_training_forward_scalar_reference() {
        use crate::biaxial::{notewise_pass, timewise_pass, NoteFeedback};
        use crate::kernel::expand;
        use crate::midi::NoteStateMatrix;
        let n = net(8, 2);
        let silent = NoteStateMatrix::zeros(MELODY_LOW, 36, 1, 16);
        let mut off = Dropout::<ChaCha8Rng>::Off;
        let hidden = timewise_pass(&n.params, &expand(&silent), &mut off).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (logits, _) =
            notewise_pass(&n.params, &hidden, NoteFeedback::Given(&silent), MELODY_LOW, 16, &mut off, &mut rng)
                .unwrap();
        let ls = |x: f64| -(1.0 + (-x).exp()).ln();
        let l = |p: u8| logits.get((p - MELODY_LOW) as usize, 0);
        let silence: f64 = (MELODY_LOW..=MELODY_HIGH).map(|p| ls(-l(p)[0])).sum();
        let (s, _) = n.step(&MelodyState::initial(&n)).unwrap();
        assert!((s[0] - (silence - LN_2)).abs() < 1e-12);
        assert!((s[1] - silence).abs() < 1e-12);
        assert!((s[14] - (ls(l(60)[0]) + ls(l(60)[1]))).abs() < 1e-12);
    }
}
