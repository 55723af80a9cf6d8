//! Deep Q-learning pieces that do not depend on the state representation.

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RlError;
use crate::neural::{Adadelta, AdadeltaState, ParamSet};

/// A differentiable action-value function.
pub trait QFunction: ParamSet + Clone + Send + Sync {
    type State: Clone + Send + Sync;
    type Cache;

    fn num_actions(&self) -> usize;

    /// Inference evaluation of every action value.
    fn q_values(&self, state: &Self::State) -> Result<Vec<f64>, RlError>;

    /// Evaluation that keeps what [`QFunction::backward`] needs.
    fn forward(&self, state: &Self::State) -> Result<(Vec<f64>, Self::Cache), RlError>;

    /// Adds `dq · ∂Q(s, action)/∂θ` into `grads`.
    fn backward(&self, cache: &Self::Cache, action: usize, dq: f64, grads: &mut Self) -> Result<(), RlError>;

    fn zeros_like(&self) -> Self;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub state: S,
    pub action: usize,
    pub reward: f64,
    pub next_state: S,
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<S> {
    capacity: usize,
    items: Vec<Transition<S>>,
    next: usize,
}

impl<S> ReplayBuffer<S> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Adds a transition, overwriting the oldest once full.
    pub fn push(&mut self, t: Transition<S>) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition<S>> {
        (0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Bootstrap target `r + γ max_a' Q(s', a'; θ⁻)`, or `r` at a terminal.
/// With `double_q` the action is chosen by the online network instead.
pub fn td_target<Q: QFunction>(
    online: &Q,
    target: &Q,
    t: &Transition<Q::State>,
    gamma: f64,
    double_q: bool,
) -> Result<f64, RlError> {
    if t.terminal {
        return Ok(t.reward);
    }
    let qt = target.q_values(&t.next_state)?;
    let next = if double_q {
        qt[argmax(&online.q_values(&t.next_state)?)]
    } else {
        qt[argmax(&qt)]
    };
    Ok(t.reward + gamma * next)
}

/// Mean squared Bellman residual over `batch` and its gradient on the
/// online parameters. The target network only supplies constants.
pub fn q_loss_and_grad<Q: QFunction>(
    online: &Q,
    target: &Q,
    batch: &[&Transition<Q::State>],
    gamma: f64,
    double_q: bool,
) -> Result<(f64, Q), RlError> {
    if batch.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let parts: Vec<Result<(f64, Q), RlError>> = batch
        .par_iter()
        .map(|t| {
            let y = td_target(online, target, t, gamma, double_q)?;
            let (q, cache) = online.forward(&t.state)?;
            let residual = q[t.action] - y;
            if !residual.is_finite() {
                return Err(RlError::NonFinite(format!(
                    "Bellman residual {residual} (Q = {}, target = {y})",
                    q[t.action]
                )));
            }
            let mut g = online.zeros_like();
            online.backward(&cache, t.action, 2.0 * residual * scale, &mut g)?;
            Ok((residual * residual * scale, g))
        })
        .collect();
    let mut grads = online.zeros_like();
    let mut loss = 0.0;
    for p in parts {
        let (l, g) = p?;
        loss += l;
        for (acc, t) in grads.tensors_mut().into_iter().zip(g.tensors()) {
            acc.add_scaled(t, 1.0);
        }
    }
    Ok((loss, grads))
}

/// One optimizer step on the online network. The target network is only
/// read. Returns the batch loss before the step.
pub fn q_update<Q: QFunction>(
    online: &mut Q,
    target: &Q,
    batch: &[&Transition<Q::State>],
    gamma: f64,
    double_q: bool,
    optimizer: &Adadelta,
    states: &mut [AdadeltaState],
) -> Result<f64, RlError> {
    let (loss, grads) = q_loss_and_grad(online, target, batch, gamma, double_q)?;
    optimizer.step(online, &grads, states)?;
    Ok(loss)
}

/// `θ⁻ ← (1 − η) θ⁻ + η θ`, elementwise.
pub fn target_sync<P: ParamSet + ?Sized>(target: &mut P, online: &P, eta: f64) {
    let keep = 1.0 - eta;
    for (t, o) in target.tensors_mut().into_iter().zip(online.tensors()) {
        assert_eq!(t.shape(), o.shape(), "target and online shapes differ");
        for (x, &y) in t.data_mut().iter_mut().zip(o.data()) {
            *x = keep * *x + eta * y;
        }
    }
}

/// How the behaviour policy picks an action from Q values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionPolicy {
    Greedy,
    Epsilon(f64),
    Boltzmann(f64),
}

/// Greedy ties go to the lowest index.
pub fn choose_action<R: Rng + ?Sized>(q: &[f64], policy: ActionPolicy, rng: &mut R) -> usize {
    match policy {
        ActionPolicy::Greedy => argmax(q),
        ActionPolicy::Epsilon(eps) => {
            if rng.gen::<f64>() < eps {
                rng.gen_range(0..q.len())
            } else {
                argmax(q)
            }
        }
        ActionPolicy::Boltzmann(tau) => {
            let m = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = q.iter().map(|&v| ((v - m) / tau).exp()).collect();
            WeightedIndex::new(&w).expect("max entry has weight 1").sample(rng)
        }
    }
}

/// Exploration schedule over a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exploration {
    /// ε falls linearly from `start` to `end` over the first
    /// `anneal_fraction` of the run, then stays at `end`.
    EpsilonGreedy { start: f64, end: f64, anneal_fraction: f64 },
    Boltzmann { temperature: f64 },
    /// Plays `actions[i mod len]` at iteration `i`, ignoring Q.
    Scripted { actions: Vec<u8> },
}

impl Default for Exploration {
    fn default() -> Self {
        Exploration::EpsilonGreedy {
            start: 1.0,
            end: 0.1,
            anneal_fraction: 0.5,
        }
    }
}

impl Exploration {
    pub fn validate(&self) -> Result<(), RlError> {
        match self {
            Exploration::EpsilonGreedy {
                start,
                end,
                anneal_fraction,
            } => {
                let ok = (0.0..=1.0).contains(start) && (0.0..=1.0).contains(end) && *anneal_fraction >= 0.0;
                ok.then_some(()).ok_or_else(|| RlError::InvalidConfig("epsilon values must lie in [0, 1]".into()))
            }
            Exploration::Boltzmann { temperature } => (*temperature > 0.0)
                .then_some(())
                .ok_or_else(|| RlError::InvalidConfig("temperature must be positive".into())),
            Exploration::Scripted { actions } => (!actions.is_empty())
                .then_some(())
                .ok_or_else(|| RlError::InvalidConfig("scripted exploration needs actions".into())),
        }
    }

    /// ε at `iteration` of `total`.
    pub fn epsilon(start: f64, end: f64, anneal_fraction: f64, iteration: usize, total: usize) -> f64 {
        let horizon = anneal_fraction * total as f64;
        if horizon <= 0.0 || iteration as f64 >= horizon {
            end
        } else {
            start + (end - start) * iteration as f64 / horizon
        }
    }

    pub fn act<R: Rng + ?Sized>(&self, q: &[f64], iteration: usize, total: usize, rng: &mut R) -> usize {
        match self {
            Exploration::EpsilonGreedy {
                start,
                end,
                anneal_fraction,
            } => {
                let eps = Self::epsilon(*start, *end, *anneal_fraction, iteration, total);
                choose_action(q, ActionPolicy::Epsilon(eps), rng)
            }
            Exploration::Boltzmann { temperature } => choose_action(q, ActionPolicy::Boltzmann(*temperature), rng),
            Exploration::Scripted { actions } => actions[iteration % actions.len()] as usize,
        }
    }
}
