//! LSTM cell with an explicit forward cache and exact backward pass.
//!
//! The four gate weight matrices are stored stacked in one `4H × (I + H)`
//! tensor acting on the concatenation `[x; h_prev]`, row blocks in the order
//! input, forget, output, candidate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, sigmoid, Tensor};
use super::{NeuralError, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    input_size: usize,
    hidden_size: usize,
    /// `4H × (I + H)`.
    pub weights: Tensor,
    /// `4H`.
    pub bias: Tensor,
}

impl LstmCellParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            weights: Tensor::zeros(&[4 * hidden_size, input_size + hidden_size]),
            bias: Tensor::zeros(&[4 * hidden_size]),
        }
    }

    /// Uniform `±1/√fan_in` weights and biases; forget-gate bias set to 1.
    pub fn init<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let fan_in = (input_size + hidden_size) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let weights = Tensor::uniform(&[4 * hidden_size, input_size + hidden_size], bound, rng);
        let mut bias = Tensor::uniform(&[4 * hidden_size], bound, rng);
        let h = hidden_size;
        bias.data_mut()[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        Self {
            input_size,
            hidden_size,
            weights,
            bias,
        }
    }

    pub fn from_parts(
        input_size: usize,
        hidden_size: usize,
        weights: Tensor,
        bias: Tensor,
    ) -> Result<Self, NeuralError> {
        weights.check_shape(&[4 * hidden_size, input_size + hidden_size])?;
        bias.check_shape(&[4 * hidden_size])?;
        Ok(Self {
            input_size,
            hidden_size,
            weights,
            bias,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    /// Weight rows of one gate, `H × (I + H)` row-major.
    pub fn gate_weights(&self, gate: Gate) -> &[f64] {
        let h = self.hidden_size;
        let w = self.input_size + h;
        let g = gate as usize;
        &self.weights.data()[g * h * w..(g + 1) * h * w]
    }

    pub fn gate_bias(&self, gate: Gate) -> &[f64] {
        let h = self.hidden_size;
        let g = gate as usize;
        &self.bias.data()[g * h..(g + 1) * h]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size, self.hidden_size)
    }

}

impl ParamSet for LstmCellParams {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.weights, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights, &mut self.bias]
    }
}

/// Activations kept from a forward step for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    z: Vec<f64>,
    /// Post-activation gates `[i, f, o, g]`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn check_len(what: &'static str, v: &[f64], n: usize) -> Result<(), NeuralError> {
    if v.len() != n {
        return Err(NeuralError::DimensionMismatch {
            what,
            expected: n,
            got: v.len(),
        });
    }
    Ok(())
}

/// One LSTM step: returns `(h, c)`.
pub fn lstm_step(
    params: &LstmCellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NeuralError> {
    check_len("input", x, params.input_size)?;
    check_len("h_prev", h_prev, params.hidden_size)?;
    check_len("c_prev", c_prev, params.hidden_size)?;
    let (h, c, _) = lstm_step_cached(params, x, h_prev, c_prev);
    Ok((h, c))
}

/// Forward step keeping the cache. Dimensions are the caller's contract.
pub fn lstm_step_cached(
    params: &LstmCellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>, LstmStepCache) {
    let hs = params.hidden_size;
    let mut z = Vec::with_capacity(params.input_size + hs);
    z.extend_from_slice(x);
    z.extend_from_slice(h_prev);

    let bias = params.bias.data();
    let mut gates: Vec<f64> = (0..4 * hs)
        .map(|r| bias[r] + dot(params.weights.row(r), &z))
        .collect();
    for v in &mut gates[..3 * hs] {
        *v = sigmoid(*v);
    }
    for v in &mut gates[3 * hs..] {
        *v = v.tanh();
    }

    let mut c = vec![0.0; hs];
    let mut tanh_c = vec![0.0; hs];
    let mut h = vec![0.0; hs];
    for k in 0..hs {
        let (i, f, o, g) = (gates[k], gates[hs + k], gates[2 * hs + k], gates[3 * hs + k]);
        c[k] = f * c_prev[k] + i * g;
        tanh_c[k] = c[k].tanh();
        h[k] = o * tanh_c[k];
    }
    let cache = LstmStepCache {
        z,
        gates,
        c_prev: c_prev.to_vec(),
        tanh_c,
    };
    (h, c, cache)
}

/// Gradients flowing out of one step.
#[derive(Debug, Clone)]
pub struct StepGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

/// Backward through one step. `dh` and `dc` are the total upstream
/// gradients on this step's `h` and `c`; parameter gradients are
/// accumulated into `grads`.
pub fn lstm_step_backward(
    params: &LstmCellParams,
    cache: &LstmStepCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmCellParams,
) -> StepGrads {
    let hs = params.hidden_size;
    let g = &cache.gates;
    let mut da = vec![0.0; 4 * hs];
    let mut dc_prev = vec![0.0; hs];
    for k in 0..hs {
        let (i, f, o, cand) = (g[k], g[hs + k], g[2 * hs + k], g[3 * hs + k]);
        let tc = cache.tanh_c[k];
        let d_o = dh[k] * tc;
        let d_c = dc[k] + dh[k] * o * (1.0 - tc * tc);
        let d_i = d_c * cand;
        let d_g = d_c * i;
        let d_f = d_c * cache.c_prev[k];
        dc_prev[k] = d_c * f;
        da[k] = d_i * i * (1.0 - i);
        da[hs + k] = d_f * f * (1.0 - f);
        da[2 * hs + k] = d_o * o * (1.0 - o);
        da[3 * hs + k] = d_g * (1.0 - cand * cand);
    }

    let mut dz = vec![0.0; cache.z.len()];
    for (r, &d) in da.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        axpy(grads.weights.row_mut(r), d, &cache.z);
        axpy(&mut dz, d, params.weights.row(r));
    }
    axpy(grads.bias.data_mut(), 1.0, &da);

    let dh_prev = dz.split_off(params.input_size);
    StepGrads {
        dx: dz,
        dh_prev,
        dc_prev,
    }
}

/// Caches of a forward run over a sequence.
#[derive(Debug, Clone, Default)]
pub struct LstmTape {
    steps: Vec<LstmStepCache>,
}

impl LstmTape {
    pub fn push(&mut self, cache: LstmStepCache) {
        self.steps.push(cache);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Runs the cell over `xs` from `(h0, c0)`; returns every `h` and the tape.
pub fn lstm_forward_sequence(
    params: &LstmCellParams,
    xs: &[Vec<f64>],
    h0: &[f64],
    c0: &[f64],
) -> (Vec<Vec<f64>>, LstmTape) {
    let mut h = h0.to_vec();
    let mut c = c0.to_vec();
    let mut hs = Vec::with_capacity(xs.len());
    let mut tape = LstmTape {
        steps: Vec::with_capacity(xs.len()),
    };
    for x in xs {
        let (h_new, c_new, cache) = lstm_step_cached(params, x, &h, &c);
        tape.steps.push(cache);
        hs.push(h_new.clone());
        h = h_new;
        c = c_new;
    }
    (hs, tape)
}

/// Input-side gradients of a sequence backward pass.
#[derive(Debug, Clone)]
pub struct SequenceGrads {
    pub dxs: Vec<Vec<f64>>,
    pub dh0: Vec<f64>,
    pub dc0: Vec<f64>,
}

/// Backpropagation through time for a sequence recorded in `tape`.
/// `dhs[t]` is the gradient of the loss on output `h_t` from outside the
/// recurrence.
pub fn lstm_backward_sequence(
    params: &LstmCellParams,
    tape: &LstmTape,
    dhs: &[Vec<f64>],
    grads: &mut LstmCellParams,
) -> Result<SequenceGrads, NeuralError> {
    if tape.steps.len() != dhs.len() {
        return Err(NeuralError::MissingCache {
            needed: dhs.len(),
            recorded: tape.steps.len(),
        });
    }
    let hs = params.hidden_size;
    let mut dh_next = vec![0.0; hs];
    let mut dc_next = vec![0.0; hs];
    let mut dxs = vec![Vec::new(); dhs.len()];
    for t in (0..dhs.len()).rev() {
        let mut dh = dhs[t].clone();
        axpy(&mut dh, 1.0, &dh_next);
        let sg = lstm_step_backward(params, &tape.steps[t], &dh, &dc_next, grads);
        dxs[t] = sg.dx;
        dh_next = sg.dh_prev;
        dc_next = sg.dc_prev;
    }
    Ok(SequenceGrads {
        dxs,
        dh0: dh_next,
        dc0: dc_next,
    })
}
