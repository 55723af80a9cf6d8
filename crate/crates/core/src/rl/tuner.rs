//! Fine-tuning a primed melody network with deep Q-learning against a
//! blend of its own log-likelihood and the theory rules.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dqn::{q_update, target_sync, Exploration, ReplayBuffer, Transition};
use super::melody::{MelodyNet, MelodyQ, MelodyState};
use super::RlError;
use crate::midi::MelodyAction;
use crate::neural::{Adadelta, AdadeltaState};
use crate::theory::{theory_reward_actions, TheoryConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub iterations: usize,
    pub gamma: f64,
    /// Target network mixing rate.
    pub eta: f64,
    /// Divisor on the theory reward.
    pub c: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub double_q: bool,
    pub exploration: Exploration,
    pub optimizer: Adadelta,
    /// Rule settings. Its `episode_len` is also the episode length.
    pub theory: TheoryConfig,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            gamma: 0.5,
            eta: 0.01,
            c: 0.5,
            batch_size: 32,
            replay_capacity: 10_000,
            double_q: false,
            exploration: Exploration::default(),
            optimizer: Adadelta::default(),
            theory: TheoryConfig::default(),
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("c must be positive");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("replay capacity must hold at least one batch");
        }
        self.exploration.validate()?;
        self.theory.validate().map_err(RlError::InvalidConfig)
    }
}

/// `log p + r_MT / c`.
pub fn blended_reward(log_p: f64, r_mt: f64, c: f64) -> f64 {
    log_p + r_mt / c
}

/// What happened on the acting step of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneRecord {
    pub iteration: usize,
    pub reward: f64,
    pub log_p: f64,
    pub r_mt: f64,
    /// `r_mt / c`.
    pub theory_term: f64,
    /// Batch loss, `NaN` before the buffer holds a batch.
    pub loss: f64,
}

pub fn trace_csv(records: &[TuneRecord]) -> String {
    let mut s = String::from("iteration,mean_reward,mean_log_p,mean_r_mt,mean_theory_term,loss\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iteration, r.reward, r.log_p, r.r_mt, r.theory_term, r.loss
        ));
    }
    s
}

/// Mean blended reward over a slice of the trace.
pub fn mean_reward(records: &[TuneRecord]) -> f64 {
    records.iter().map(|r| r.reward).sum::<f64>() / records.len() as f64
}

/// Runs the tuner. `reward_net` is only read, so the log-likelihood part of
/// the reward always comes from the primed weights.
///
/// Successor memories are computed by the online network when it acts and
/// are reused by the target network.
pub fn tune<R: Rng + ?Sized>(
    reward_net: &MelodyNet,
    config: &TuneConfig,
    rng: &mut R,
) -> Result<(MelodyQ, Vec<TuneRecord>), RlError> {
    config.validate()?;
    let mut online = MelodyQ::from_primed(reward_net.clone());
    let mut target = online.clone();
    let mut opt_state = AdadeltaState::for_params(&online);
    let mut replay = ReplayBuffer::new(config.replay_capacity);
    let episode_len = config.theory.episode_len;

    let mut q_state = MelodyState::initial(&online.net);
    let mut r_state = MelodyState::initial(reward_net);
    let mut history: Vec<MelodyAction> = Vec::with_capacity(episode_len);
    let mut trace = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let (q, q_memory) = online.evaluate(&q_state)?;
        let a = config.exploration.act(&q, it, config.iterations, rng) as MelodyAction;
        let (log_probs, r_memory) = reward_net.log_probs(&r_state)?;
        let log_p = log_probs[a as usize];
        let r_mt = theory_reward_actions(&history, a, &config.theory).total;
        let reward = blended_reward(log_p, r_mt, config.c);
        let next = q_state.next(a, q_memory);
        let terminal = next.step == episode_len;
        replay.push(Transition {
            state: q_state.clone(),
            action: a as usize,
            reward,
            next_state: next.clone(),
            terminal,
        });

        let mut loss = f64::NAN;
        if replay.len() >= config.batch_size {
            let batch = replay.sample(config.batch_size, rng);
            loss = q_update(
                &mut online,
                &target,
                &batch,
                config.gamma,
                config.double_q,
                &config.optimizer,
                &mut opt_state,
            )?;
            target_sync(&mut target, &online, config.eta);
        }
        trace.push(TuneRecord {
            iteration: it,
            reward,
            log_p,
            r_mt,
            theory_term: r_mt / config.c,
            loss,
        });

        if terminal {
            q_state = MelodyState::initial(&online.net);
            r_state = MelodyState::initial(reward_net);
            history.clear();
        } else {
            q_state = next;
            r_state = r_state.next(a, r_memory);
            history.push(a);
        }
        if it % 500 == 0 {
            log::debug!("tune iteration {it}: reward {reward:.3}, loss {loss:.4}");
        }
    }
    Ok((online, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biaxial::{BiaxialParams, BiaxialShape};
    use crate::midi::MELODY_LOW;
    use crate::neural::ParamSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reward_net() -> MelodyNet {
        let shape = BiaxialShape::new(vec![4], vec![4]).unwrap();
        let p = BiaxialParams::init(&shape, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        MelodyNet::new(p, MELODY_LOW, 36).unwrap()
    }

    fn small(iterations: usize) -> TuneConfig {
        TuneConfig {
            iterations,
            batch_size: 4,
            ..TuneConfig::default()
        }
    }

    #[test]
    fn blended_reward_formula() {
        assert_eq!(blended_reward(-2.0, 3.0, 0.5), 4.0);
        assert_eq!(blended_reward(-1.0, 0.0, 0.5), -1.0);
    }

    #[test]
    fn reward_net_is_not_modified() {
        let net = reward_net();
        let before = net.params.flatten();
        let (tuned, trace) = tune(&net, &small(40), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(net.params.flatten(), before);
        assert_ne!(tuned.net.params.flatten(), before);
        assert_eq!(trace.len(), 40);
        assert!(trace[..3].iter().all(|r| r.loss.is_nan()));
        assert!(trace[3..].iter().all(|r| r.loss.is_finite()));
    }

    #[test]
    fn trace_terms_add_up() {
        let net = reward_net();
        let (_, trace) = tune(&net, &small(40), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for r in &trace {
            assert!(r.log_p <= 0.0);
            assert!((r.reward - (r.log_p + r.r_mt / 0.5)).abs() < 1e-12);
        }
        let csv = trace_csv(&trace);
        assert_eq!(csv.lines().count(), 41);
    }

    #[test]
    fn tuning_is_deterministic() {
        let net = reward_net();
        let a = tune(&net, &small(20), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = tune(&net, &small(20), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(trace_csv(&a.1), trace_csv(&b.1));
    }

    #[test]
    fn scripted_episode_resets_history() {
        let net = reward_net();
        let cfg = TuneConfig {
            exploration: Exploration::Scripted { actions: vec![14] },
            ..small(64)
        };
        let (_, trace) = tune(&net, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        // the same action every step: episodes of 32 give identical rule rewards
        for k in 0..32 {
            assert_eq!(trace[k].r_mt, trace[k + 32].r_mt);
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        let net = reward_net();
        for cfg in [
            TuneConfig { gamma: 1.0, ..small(1) },
            TuneConfig { c: 0.0, ..small(1) },
            TuneConfig { eta: 0.0, ..small(1) },
            TuneConfig {
                replay_capacity: 2,
                ..small(1)
            },
        ] {
            assert!(matches!(
                tune(&net, &cfg, &mut ChaCha8Rng::seed_from_u64(0)),
                Err(RlError::InvalidConfig(_))
            ));
        }
    }
}
