//! A stack of LSTM layers run over one sequence, with inverted dropout on
//! every layer's output. Both model axes are built from this.

use rand::Rng;

use crate::neural::{
    dropout_mask, lstm_backward_sequence, lstm_step, lstm_step_cached, LstmCellParams, LstmTape, NeuralError,
};

/// Per-layer `(h, c)` of one running sequence.
pub type StackState = Vec<(Vec<f64>, Vec<f64>)>;

pub fn zero_state(layers: &[LstmCellParams]) -> StackState {
    layers
        .iter()
        .map(|l| (vec![0.0; l.hidden_size()], vec![0.0; l.hidden_size()]))
        .collect()
}

/// Dropout setting for a forward pass.
pub enum Dropout<'a, R: Rng + ?Sized> {
    Off,
    On { keep_prob: f64, rng: &'a mut R },
}

impl<R: Rng + ?Sized> Dropout<'_, R> {
    fn mask(&mut self, len: usize) -> Result<Option<Vec<f64>>, NeuralError> {
        match self {
            Dropout::Off => Ok(None),
            Dropout::On { keep_prob, rng } => {
                if *keep_prob == 1.0 {
                    Ok(None)
                } else {
                    dropout_mask(len, *keep_prob, true, *rng).map(Some)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StackTape {
    tapes: Vec<LstmTape>,
    /// `masks[layer][step]`, `None` when dropout was off.
    masks: Vec<Vec<Option<Vec<f64>>>>,
}

impl StackTape {
    pub fn steps(&self) -> usize {
        self.tapes.first().map_or(0, |t| t.len())
    }
}

fn apply_mask(h: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        h.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
    }
}

/// Step-major forward over `steps` inputs. `input(s, prev)` builds the
/// layer-0 input of step `s`, where `prev` is the stack's (masked) output at
/// step `s − 1`; that lets the note axis feed back its own samples.
///
/// Returns the masked top outputs and the tape for [`stack_backward`].
pub fn stack_forward<R, F>(
    layers: &[LstmCellParams],
    steps: usize,
    init: Option<&StackState>,
    dropout: &mut Dropout<'_, R>,
    mut input: F,
) -> Result<(Vec<Vec<f64>>, StackTape), NeuralError>
where
    R: Rng + ?Sized,
    F: FnMut(usize, Option<&[f64]>) -> Vec<f64>,
{
    let mut state = init.cloned().unwrap_or_else(|| zero_state(layers));
    let mut tape = StackTape {
        tapes: vec![LstmTape::default(); layers.len()],
        masks: vec![Vec::with_capacity(steps); layers.len()],
    };
    let mut outs: Vec<Vec<f64>> = Vec::with_capacity(steps);
    for s in 0..steps {
        let mut x = input(s, outs.last().map(|v| v.as_slice()));
        for (l, layer) in layers.iter().enumerate() {
            if x.len() != layer.input_size() {
                return Err(NeuralError::DimensionMismatch {
                    what: "stack input",
                    expected: layer.input_size(),
                    got: x.len(),
                });
            }
            let (h_prev, c_prev) = &state[l];
            let (h, c, cache) = lstm_step_cached(layer, &x, h_prev, c_prev);
            tape.tapes[l].push(cache);
            let mask = dropout.mask(h.len())?;
            let mut out = h.clone();
            apply_mask(&mut out, &mask);
            tape.masks[l].push(mask);
            state[l] = (h, c);
            x = out;
        }
        outs.push(x);
    }
    Ok((outs, tape))
}

/// Inference step without caches or dropout. Updates `state` and returns
/// the top output.
pub fn stack_step(layers: &[LstmCellParams], x: &[f64], state: &mut StackState) -> Result<Vec<f64>, NeuralError> {
    let mut x = x.to_vec();
    for (layer, st) in layers.iter().zip(state.iter_mut()) {
        let (h, c) = lstm_step(layer, &x, &st.0, &st.1)?;
        *st = (h.clone(), c);
        x = h;
    }
    Ok(x)
}

/// Backward through a recorded stack. `d_outs[s]` is the loss gradient on
/// the masked top output of step `s`. Returns the gradient on each layer-0
/// input and accumulates parameter gradients into `grads`.
pub fn stack_backward(
    layers: &[LstmCellParams],
    tape: &StackTape,
    d_outs: Vec<Vec<f64>>,
    grads: &mut [LstmCellParams],
) -> Result<Vec<Vec<f64>>, NeuralError> {
    let mut d = d_outs;
    for l in (0..layers.len()).rev() {
        for (ds, mask) in d.iter_mut().zip(&tape.masks[l]) {
            apply_mask(ds, mask);
        }
        let seq = lstm_backward_sequence(&layers[l], &tape.tapes[l], &d, &mut grads[l])?;
        d = seq.dxs;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::max_relative_error;
    use crate::neural::ParamSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layers(seed: u64) -> Vec<LstmCellParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        vec![LstmCellParams::init(3, 4, &mut rng), LstmCellParams::init(4, 2, &mut rng)]
    }

    #[test]
    fn forward_matches_stepping() {
        let ls = layers(1);
        let xs: Vec<Vec<f64>> = (0..5).map(|s| vec![s as f64 * 0.1, -0.2, 0.3]).collect();
        let (outs, tape) =
            stack_forward::<ChaCha8Rng, _>(&ls, 5, None, &mut Dropout::Off, |s, _| xs[s].clone()).unwrap();
        assert_eq!(tape.steps(), 5);
        let mut st = zero_state(&ls);
        for (s, x) in xs.iter().enumerate() {
            assert_eq!(stack_step(&ls, x, &mut st).unwrap(), outs[s]);
        }
    }

    #[test]
    fn backward_matches_finite_differences_with_dropout() {
        let ls = layers(2);
        let xs: Vec<Vec<f64>> = (0..4).map(|s| vec![0.5 - s as f64 * 0.3, 0.2, -0.7]).collect();
        let w: Vec<Vec<f64>> = (0..4).map(|s| vec![1.0, -0.5 + s as f64]).collect();
        let run = |ls: &[LstmCellParams], tape_out: bool| {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let mut drop = Dropout::On {
                keep_prob: 0.5,
                rng: &mut rng,
            };
            let (outs, tape) = stack_forward(ls, 4, None, &mut drop, |s, _| xs[s].clone()).unwrap();
            let loss: f64 = outs
                .iter()
                .zip(&w)
                .map(|(o, w)| o.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
                .sum();
            (loss, tape_out.then_some(tape))
        };
        let (_, tape) = run(&ls, true);
        let mut grads: Vec<LstmCellParams> = ls.iter().map(|l| l.zeros_like()).collect();
        stack_backward(&ls, &tape.unwrap(), w.clone(), &mut grads).unwrap();
        let analytic: Vec<f64> = grads.iter().flat_map(|g| g.flatten()).collect();
        let flat: Vec<f64> = ls.iter().flat_map(|l| l.flatten()).collect();
        let f = |z: &[f64]| {
            let mut q = ls.clone();
            let n0 = q[0].num_params();
            q[0].assign_flat(&z[..n0]);
            q[1].assign_flat(&z[n0..]);
            run(&q, false).0
        };
        let err = max_relative_error(f, &flat, &analytic, 1e-5);
        assert!(err < 1e-6, "max rel err {err:e}");
    }
}
