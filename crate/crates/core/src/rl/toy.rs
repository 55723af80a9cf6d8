//! A tabular Q-function and a small deterministic MDP, used to check the
//! DQN machinery against exact value iteration.

use rand::Rng;

use super::dqn::{q_update, target_sync, Exploration, QFunction, ReplayBuffer, Transition};
use super::RlError;
use crate::neural::{Adadelta, AdadeltaState, ParamSet, Tensor};

/// `Q(s, a)` stored as a `states × actions` table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    pub table: Tensor,
}

impl TabularQ {
    pub fn zeros(states: usize, actions: usize) -> Self {
        Self {
            table: Tensor::zeros(&[states, actions]),
        }
    }
}

impl ParamSet for TabularQ {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.table]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.table]
    }
}

impl QFunction for TabularQ {
    type State = usize;
    type Cache = usize;

    fn num_actions(&self) -> usize {
        self.table.shape()[1]
    }

    fn q_values(&self, s: &usize) -> Result<Vec<f64>, RlError> {
        Ok(self.table.row(*s).to_vec())
    }

    fn forward(&self, s: &usize) -> Result<(Vec<f64>, usize), RlError> {
        Ok((self.table.row(*s).to_vec(), *s))
    }

    fn backward(&self, s: &usize, action: usize, dq: f64, grads: &mut Self) -> Result<(), RlError> {
        grads.table.row_mut(*s)[action] += dq;
        Ok(())
    }

    fn zeros_like(&self) -> Self {
        Self {
            table: self.table.zeros_like(),
        }
    }
}

/// An environment with integer states.
pub trait Environment {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn reset(&self) -> usize;
    /// `(reward, next state, terminal)`.
    fn step(&self, state: usize, action: usize) -> (f64, usize, bool);
}

/// Deterministic, never-terminating MDP: action 0 moves one state to the
/// right (wrapping), action 1 stays.
#[derive(Debug, Clone)]
pub struct ToyMdp {
    pub rewards: [[f64; 2]; 3],
}

impl Default for ToyMdp {
    fn default() -> Self {
        Self {
            rewards: [[0.0, 0.2], [1.0, -0.5], [-1.0, 0.5]],
        }
    }
}

impl Environment for ToyMdp {
    fn num_states(&self) -> usize {
        3
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn reset(&self) -> usize {
        0
    }

    fn step(&self, state: usize, action: usize) -> (f64, usize, bool) {
        let next = if action == 0 { (state + 1) % 3 } else { state };
        (self.rewards[state][action], next, false)
    }
}

/// Exact `Q*` by iterating the Bellman optimality operator to a fixed
/// point.
pub fn value_iteration<E: Environment>(env: &E, gamma: f64, tol: f64) -> Vec<Vec<f64>> {
    let (ns, na) = (env.num_states(), env.num_actions());
    let mut q = vec![vec![0.0; na]; ns];
    loop {
        let mut delta: f64 = 0.0;
        let mut next = q.clone();
        for s in 0..ns {
            for a in 0..na {
                let (r, s2, term) = env.step(s, a);
                let v = if term {
                    0.0
                } else {
                    q[s2].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                };
                next[s][a] = r + gamma * v;
                delta = delta.max((next[s][a] - q[s][a]).abs());
            }
        }
        q = next;
        if delta < tol {
            return q;
        }
    }
}

#[derive(Debug, Clone)]
pub struct TabularDqnConfig {
    pub iterations: usize,
    pub gamma: f64,
    pub eta: f64,
    pub batch_size: usize,
    pub episode_len: usize,
    pub replay_capacity: usize,
    pub exploration: Exploration,
    pub optimizer: Adadelta,
}

impl Default for TabularDqnConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            gamma: 0.5,
            eta: 0.01,
            batch_size: 32,
            episode_len: 32,
            replay_capacity: 10_000,
            exploration: Exploration::default(),
            optimizer: Adadelta::default(),
        }
    }
}

/// The DQN loop (act, store, replay, update, sync) on an integer-state
/// environment. Returns the online table.
pub fn run_tabular_dqn<E: Environment, R: Rng + ?Sized>(
    env: &E,
    config: &TabularDqnConfig,
    rng: &mut R,
) -> Result<TabularQ, RlError> {
    let mut online = TabularQ::zeros(env.num_states(), env.num_actions());
    let mut target = online.clone();
    let mut states = AdadeltaState::for_params(&online);
    let mut replay = ReplayBuffer::new(config.replay_capacity);
    let mut s = env.reset();
    let mut t = 0;
    for it in 0..config.iterations {
        let q = online.q_values(&s)?;
        let a = config.exploration.act(&q, it, config.iterations, rng);
        let (r, s2, term) = env.step(s, a);
        replay.push(Transition {
            state: s,
            action: a,
            reward: r,
            next_state: s2,
            terminal: term,
        });
        t += 1;
        if term || t == config.episode_len {
            s = env.reset();
            t = 0;
        } else {
            s = s2;
        }
        if replay.len() >= config.batch_size {
            let batch = replay.sample(config.batch_size, rng);
            q_update(
                &mut online,
                &target,
                &batch,
                config.gamma,
                false,
                &config.optimizer,
                &mut states,
            )?;
            target_sync(&mut target, &online, config.eta);
        }
    }
    Ok(online)
}

/// Largest absolute difference between a table and `Q*`.
pub fn max_abs_error(q: &TabularQ, reference: &[Vec<f64>]) -> f64 {
    reference
        .iter()
        .enumerate()
        .flat_map(|(s, row)| row.iter().enumerate().map(move |(a, &v)| (s, a, v)))
        .map(|(s, a, v)| (q.table.row(s)[a] - v).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn value_iteration_satisfies_bellman() {
        let env = ToyMdp::default();
        let q = value_iteration(&env, 0.5, 1e-14);
        for s in 0..3 {
            for a in 0..2 {
                let (r, s2, _) = env.step(s, a);
                let v = q[s2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!((q[s][a] - (r + 0.5 * v)).abs() < 1e-12);
            }
        }
        // V = (0.75, 1.5, 1): 0 → 1 → 2, then stay in 2 for 0.5 / (1 − 0.5)
        let exact = [[0.75, 0.575], [1.5, 0.25], [-0.625, 1.0]];
        for s in 0..3 {
            for a in 0..2 {
                assert!((q[s][a] - exact[s][a]).abs() < 1e-12, "Q[{s}][{a}] = {}", q[s][a]);
            }
        }
    }

    #[test]
    fn short_run_moves_towards_oracle() {
        let env = ToyMdp::default();
        let cfg = TabularDqnConfig {
            iterations: 300,
            ..TabularDqnConfig::default()
        };
        let q = run_tabular_dqn(&env, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let oracle = value_iteration(&env, 0.5, 1e-14);
        let zero = TabularQ::zeros(3, 2);
        assert!(max_abs_error(&q, &oracle) < max_abs_error(&zero, &oracle));
    }
}
