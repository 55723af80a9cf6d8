//! Adadelta optimizer.
//!
//! ```text
//! E[g²]  ← ρ E[g²] + (1 − ρ) g²
//! Δx     = −(√(E[Δx²] + ε) / √(E[g²] + ε)) g
//! E[Δx²] ← ρ E[Δx²] + (1 − ρ) Δx²
//! x      ← x + lr Δx
//! ```

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::NeuralError;

/// A collection of parameter tensors with a fixed traversal order.
///
/// Gradients use the same type as the parameters, so optimizers, checkpoint
/// writers and target-network syncs can walk both in lockstep.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All values concatenated in traversal order.
    fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Inverse of [`ParamSet::flatten`].
    fn assign_flat(&mut self, values: &[f64]) {
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
        assert_eq!(off, values.len(), "flat parameter length mismatch");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adadelta {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
}

impl Default for Adadelta {
    fn default() -> Self {
        Self {
            rho: 0.95,
            eps: 1e-6,
            lr: 1.0,
        }
    }
}

/// Running averages for one tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaState {
    pub sq_grad: Vec<f64>,
    pub sq_delta: Vec<f64>,
}

impl AdadeltaState {
    pub fn new(len: usize) -> Self {
        Self {
            sq_grad: vec![0.0; len],
            sq_delta: vec![0.0; len],
        }
    }

    /// One state per tensor of `params`.
    pub fn for_params<P: ParamSet + ?Sized>(params: &P) -> Vec<Self> {
        params.tensors().iter().map(|t| Self::new(t.len())).collect()
    }
}

impl Adadelta {
    /// Updates one parameter slice. A non-finite gradient rejects the step
    /// without touching `param` or `state`.
    pub fn update(&self, param: &mut [f64], grad: &[f64], state: &mut AdadeltaState) -> Result<(), NeuralError> {
        if param.len() != grad.len() || state.sq_grad.len() != grad.len() {
            return Err(NeuralError::DimensionMismatch {
                what: "adadelta gradient",
                expected: param.len(),
                got: grad.len(),
            });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(NeuralError::NonFinite(format!("gradient component {i} is {}", grad[i])));
        }
        self.apply(param, grad, state);
        Ok(())
    }

    fn apply(&self, param: &mut [f64], grad: &[f64], state: &mut AdadeltaState) {
        let (rho, eps) = (self.rho, self.eps);
        for (((x, &g), eg2), edx2) in param
            .iter_mut()
            .zip(grad)
            .zip(state.sq_grad.iter_mut())
            .zip(state.sq_delta.iter_mut())
        {
            *eg2 = rho * *eg2 + (1.0 - rho) * g * g;
            let dx = -((*edx2 + eps).sqrt() / (*eg2 + eps).sqrt()) * g;
            *edx2 = rho * *edx2 + (1.0 - rho) * dx * dx;
            *x += self.lr * dx;
        }
    }

    /// Updates every tensor of `params`. All gradients are checked before
    /// anything is modified, so a rejected step leaves no partial update.
    pub fn step<P: ParamSet + ?Sized>(
        &self,
        params: &mut P,
        grads: &P,
        states: &mut [AdadeltaState],
    ) -> Result<(), NeuralError> {
        let gs = grads.tensors();
        for (k, g) in gs.iter().enumerate() {
            if !g.all_finite() {
                return Err(NeuralError::NonFinite(format!("gradient tensor {k} has non-finite values")));
            }
        }
        for ((p, g), s) in params.tensors_mut().into_iter().zip(gs).zip(states.iter_mut()) {
            self.apply(p.data_mut(), g.data(), s);
        }
        Ok(())
    }
}
