//! Desk-scale model-free pretraining: one-step advantage actor-critic with
//! Adam. Not PPO/SAC/TD3/DDPG; a stand-in that produces a profit-seeking
//! policy and a critic in the same units the planner bootstraps with.
//!
//! * `stochastic-ac`: Gaussian-logit policy, learned log-std, score-function
//!   actor gradient weighted by the TD(0) advantage.
//! * `deterministic-ac`: same update with a fixed exploration std; the
//!   deployed policy is the deterministic head.
//!
//! Training sees only the range it is given, with no forecaster involved.
//! The returned parameters are the best of {initial, end of each epoch} by
//! deterministic episode reward on that range, so they never score below the
//! initial parameters there.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::Tape;
use super::{sample_action_noise, ActMode, PolicyError, PolicyMode, PolicyParams, Result, TapeNet};
use crate::env::{self, observe, run_episode, softmax, EnvConfig, EnvError, PortfolioState, Weights};
use crate::marketdata::{MarketSeries, Normalizer};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PretrainAlgo {
    StochasticAc,
    DeterministicAc,
}

impl PretrainAlgo {
    pub fn policy_mode(self) -> PolicyMode {
        match self {
            PretrainAlgo::StochasticAc => PolicyMode::Stochastic,
            PretrainAlgo::DeterministicAc => PolicyMode::Deterministic,
        }
    }
}

impl std::fmt::Display for PretrainAlgo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PretrainAlgo::StochasticAc => "stochastic-ac",
            PretrainAlgo::DeterministicAc => "deterministic-ac",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub algo: PretrainAlgo,
    pub epochs: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub critic_coef: f64,
    pub entropy_coef: f64,
    /// Exploration std in logit space for `deterministic-ac`.
    pub explore_std: f64,
    pub max_grad_norm: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            algo: PretrainAlgo::StochasticAc,
            epochs: 10,
            learning_rate: 3e-4,
            gamma: 0.99,
            batch_size: 32,
            critic_coef: 0.5,
            entropy_coef: 1e-3,
            explore_std: 0.5,
            max_grad_norm: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub initial_reward: f64,
    /// Deterministic train-range reward after each epoch.
    pub epoch_rewards: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub final_reward: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
        }
    }

    /// Descent step on `params` where `mask` is set.
    fn update(&mut self, params: &mut [f64], grad: &[f64], mask: &[bool]) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        for i in 0..params.len() {
            if !mask[i] {
                continue;
            }
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn env_err(e: EnvError) -> PolicyError {
    match e {
        EnvError::Policy(p) => p,
        other => PolicyError::Training {
            step: 0,
            message: other.to_string(),
        },
    }
}

fn eval_reward(
    series: &MarketSeries,
    norm: &Normalizer,
    range: &Range<usize>,
    params: &PolicyParams,
    env_config: &EnvConfig,
) -> Result<f64> {
    Ok(run_episode(series, norm, range.clone(), params, ActMode::Deterministic, 0, env_config)
        .map_err(env_err)?
        .total_reward())
}

/// Trains `initial` on days `range` of `series`.
pub fn pretrain(
    series: &MarketSeries,
    norm: &Normalizer,
    range: Range<usize>,
    initial: &PolicyParams,
    env_config: &EnvConfig,
    config: &PretrainConfig,
    seed: u64,
) -> Result<(PolicyParams, PretrainReport)> {
    if initial.config().mode != config.algo.policy_mode() {
        return Err(PolicyError::Config(format!(
            "{} requires a {:?} policy",
            config.algo,
            config.algo.policy_mode()
        )));
    }
    let initial_reward = eval_reward(series, norm, &range, initial, env_config)?;
    let mut report = PretrainReport {
        initial_reward,
        epoch_rewards: Vec::with_capacity(config.epochs),
        best_epoch: None,
        final_reward: initial_reward,
    };
    if config.epochs == 0 {
        return Ok((initial.clone(), report));
    }
    if range.len() < 2 {
        return Err(PolicyError::Config(format!("training range {range:?} has no transitions")));
    }

    let mut params = initial.clone();
    let mut best = initial.clone();
    let mut best_reward = initial_reward;
    let mut mask = vec![true; params.len()];
    if config.algo == PretrainAlgo::DeterministicAc {
        let ls = params.tensor("actor.log_std").expect("log_std tensor").range();
        mask[ls].iter_mut().for_each(|m| *m = false);
    }
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let scale = params.config().value_scale;
    let n_actions = params.config().n_actions;
    let mut global_step = 0usize;

    for epoch in 0..config.epochs {
        let mut state = PortfolioState::initial(env_config, series.n_assets(), range.start);
        let mut acc = vec![0.0; params.len()];
        let mut in_batch = 0usize;
        let mut obs = observe(series, norm, range.start).map_err(env_err)?;
        for t in range.start..range.end - 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, &[seed::TRAIN_STREAM, epoch as u64, t as u64]));
            let z = sample_action_noise(&mut rng, n_actions);
            let mean = params.actor_mean(&obs)?;
            let fixed_log_std = match config.algo {
                PretrainAlgo::StochasticAc => None,
                PretrainAlgo::DeterministicAc => Some(config.explore_std.ln()),
            };
            let logits: Vec<f64> = match fixed_log_std {
                None => mean
                    .iter()
                    .zip(params.log_std())
                    .zip(&z)
                    .map(|((m, ls), e)| m + ls.exp() * e)
                    .collect(),
                Some(ls) => mean.iter().zip(&z).map(|(m, e)| m + ls.exp() * e).collect(),
            };
            let target_w = Weights::new(softmax(&logits)).map_err(env_err)?;
            let (next, reward) =
                env::step(&state, &target_w, &series.relatives(t), env_config.fee_rate).map_err(env_err)?;
            let next_obs = observe(series, norm, t + 1).map_err(env_err)?;
            let v_next = super::value(&params, &next_obs)? / scale;
            let td_target = reward / scale + config.gamma * v_next;

            let mut tape = Tape::new(params.len());
            let net = TapeNet::new(&mut tape, &params);
            let x = tape.constant(obs.clone());
            let v = net.value(&mut tape, x, false)?;
            let v = tape.scale(v, 1.0 / scale);
            let advantage = td_target - tape.scalar(v);
            let err = tape.offset(v, -td_target);
            let critic_loss = tape.mul(err, err);
            let critic_loss = tape.scale(critic_loss, 0.5 * config.critic_coef);
            let lp = match fixed_log_std {
                None => net.log_prob(&mut tape, x, &logits),
                Some(ls) => {
                    let m = net.actor_mean(&mut tape, x);
                    let a = tape.constant(logits.clone());
                    let d = tape.sub(a, m);
                    let d2 = tape.mul(d, d);
                    let s = tape.sum(d2);
                    tape.scale(s, -0.5 / (2.0 * ls).exp())
                }
            };
            let actor_loss = tape.scale(lp, -advantage);
            let mut loss = tape.add(critic_loss, actor_loss);
            if fixed_log_std.is_none() && config.entropy_coef != 0.0 {
                let ls = net.param_var("actor.log_std").expect("log_std tensor");
                let ent = tape.sum(ls);
                let ent = tape.scale(ent, -config.entropy_coef);
                loss = tape.add(loss, ent);
            }
            if !tape.scalar(loss).is_finite() {
                return Err(PolicyError::Training {
                    step: global_step,
                    message: "non-finite loss".into(),
                });
            }
            let grads = tape.backward(loss).map_err(|e| PolicyError::Training {
                step: global_step,
                message: e.to_string(),
            })?;
            acc.iter_mut().zip(grads.params()).for_each(|(a, g)| *a += g);
            in_batch += 1;
            if in_batch == config.batch_size || t + 2 == range.end {
                let inv = 1.0 / in_batch as f64;
                acc.iter_mut().for_each(|a| *a *= inv);
                let norm2 = acc.iter().map(|a| a * a).sum::<f64>().sqrt();
                if norm2 > config.max_grad_norm && config.max_grad_norm > 0.0 {
                    let k = config.max_grad_norm / norm2;
                    acc.iter_mut().for_each(|a| *a *= k);
                }
                adam.update(params.flat_mut(), &acc, &mask);
                acc.iter_mut().for_each(|a| *a = 0.0);
                in_batch = 0;
            }
            state = next;
            obs = next_obs;
            global_step += 1;
        }
        let reward = eval_reward(series, norm, &range, &params, env_config)?;
        report.epoch_rewards.push(reward);
        if reward > best_reward {
            best_reward = reward;
            best = params.clone();
            report.best_epoch = Some(epoch);
        }
    }
    report.final_reward = best_reward;
    Ok((best, report))
}
