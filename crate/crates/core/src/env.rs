//! The portfolio MDP: softmax allocation onto the simplex (index 0 is cash),
//! turnover-proportional fees, value evolution under realized price
//! relatives and the PnL reward `V_{t+1} - V_t`.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::{compute_features, DataError, MarketSeries, Normalizer};
use crate::policy::{self, ActMode, PolicyError, PolicyParams};
use crate::seed;

/// Slack allowed on the simplex sum and on negative entries.
pub const SIMPLEX_TOL: f64 = 1e-9;
pub const NEGATIVE_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("weights off the simplex: {0}")]
    Simplex(String),
    #[error("market data error: {0}")]
    Market(String),
    #[error("invalid env config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

pub type Result<T, E = EnvError> = std::result::Result<T, E>;

/// Portfolio weights on the simplex, `w[0]` is cash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weights(Vec<f64>);

impl Weights {
    /// Validates simplex membership; entries in `[-1e-12, 0)` are clamped
    /// to zero and the vector renormalized.
    pub fn new(mut w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(EnvError::Simplex("empty weight vector".into()));
        }
        for (i, x) in w.iter_mut().enumerate() {
            if !x.is_finite() || *x < -NEGATIVE_CLAMP {
                return Err(EnvError::Simplex(format!("entry {i} = {x}")));
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(EnvError::Simplex(format!("sum = {sum}")));
        }
        if sum != 1.0 {
            w.iter_mut().for_each(|x| *x /= sum);
        }
        Ok(Self(w))
    }

    pub fn all_cash(n_assets: usize) -> Self {
        let mut w = vec![0.0; n_assets + 1];
        w[0] = 1.0;
        Self(w)
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn cash(&self) -> f64 {
        self.0[0]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Max-subtracted softmax.
pub fn softmax_weights(logits: &[f64]) -> Result<Weights> {
    if logits.is_empty() || logits.iter().any(|x| x.is_nan()) {
        return Err(EnvError::InvalidAction(format!("logits {logits:?}")));
    }
    Weights::new(softmax(logits))
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// L1 turnover over all entries, cash included.
pub fn turnover(prev: &Weights, next: &Weights) -> f64 {
    prev.0.iter().zip(&next.0).map(|(a, b)| (a - b).abs()).sum()
}

/// `δ = c · V · ‖next − prev‖₁`
pub fn transaction_cost(prev: &Weights, next: &Weights, value: f64, fee_rate: f64) -> f64 {
    fee_rate * value * turnover(prev, next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub initial_value: f64,
    pub fee_rate: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            initial_value: 100_000.0,
            fee_rate: 0.001,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_value > 0.0) {
            return Err(EnvError::Config(format!("initial_value {} must be > 0", self.initial_value)));
        }
        if !(0.0..1.0).contains(&self.fee_rate) {
            return Err(EnvError::Config(format!("fee_rate {} must be in [0, 1)", self.fee_rate)));
        }
        Ok(())
    }
}

/// Value and drifted weights at the start of a period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState {
    pub value: f64,
    pub weights: Weights,
    pub t: usize,
}

impl PortfolioState {
    pub fn initial(config: &EnvConfig, n_assets: usize, t: usize) -> Self {
        Self {
            value: config.initial_value,
            weights: Weights::all_cash(n_assets),
            t,
        }
    }
}

/// Rebalances from `state.weights` to `target`, then lets prices move by
/// `relatives` (assets only; cash is fixed at 1).
///
/// `V' = (V − δ)(1 + ρ)`, `ρ = Σ_{i≥1} w_i (rel_i − 1)`; the new weights are
/// the target drifted by the relatives and renormalized.
pub fn step(
    state: &PortfolioState,
    target: &Weights,
    relatives: &[f64],
    fee_rate: f64,
) -> Result<(PortfolioState, f64)> {
    if relatives.len() + 1 != target.len() || target.len() != state.weights.len() {
        return Err(EnvError::Market(format!(
            "{} relatives for {} weights",
            relatives.len(),
            target.len()
        )));
    }
    if let Some((i, r)) = relatives.iter().enumerate().find(|(_, r)| !(r.is_finite() && **r > 0.0)) {
        return Err(EnvError::Market(format!("relative for asset {i} is {r}")));
    }
    let fee = transaction_cost(&state.weights, target, state.value, fee_rate);
    let w = target.as_slice();
    let rho: f64 = w[1..].iter().zip(relatives).map(|(wi, r)| wi * (r - 1.0)).sum();
    let value = (state.value - fee) * (1.0 + rho);
    let gross = w[0] + w[1..].iter().zip(relatives).map(|(wi, r)| wi * r).sum::<f64>();
    let mut drifted = Vec::with_capacity(w.len());
    drifted.push(w[0] / gross);
    drifted.extend(w[1..].iter().zip(relatives).map(|(wi, r)| wi * r / gross));
    let reward = value - state.value;
    Ok((
        PortfolioState {
            value,
            weights: Weights::new(drifted)?,
            t: state.t + 1,
        },
        reward,
    ))
}

/// Per-step record of an episode. `values` has one more entry than the
/// per-step vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: usize,
    pub values: Vec<f64>,
    pub weights: Vec<Weights>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Anything that chooses target weights from an observation.
pub trait Allocator {
    fn allocate(&mut self, obs: &[f64], state: &PortfolioState) -> Result<Weights>;
}

impl<F> Allocator for F
where
    F: FnMut(&[f64], &PortfolioState) -> Result<Weights>,
{
    fn allocate(&mut self, obs: &[f64], state: &PortfolioState) -> Result<Weights> {
        self(obs, state)
    }
}

/// Normalized flat observation at day `t`.
pub fn observe(series: &MarketSeries, norm: &Normalizer, t: usize) -> Result<Vec<f64>> {
    Ok(norm.apply(&compute_features(series, t)?).flatten())
}

/// Steps the allocator over days `range` (trading at `t` into `t + 1`),
/// starting all-cash. The last tradeable day is `range.end - 2`.
pub fn simulate(
    series: &MarketSeries,
    norm: &Normalizer,
    range: Range<usize>,
    config: &EnvConfig,
    allocator: &mut dyn Allocator,
) -> Result<Trajectory> {
    config.validate()?;
    let end = range.end.min(series.len());
    let mut state = PortfolioState::initial(config, series.n_assets(), range.start);
    let steps = end.saturating_sub(range.start + 1);
    let mut traj = Trajectory {
        start: range.start,
        values: Vec::with_capacity(steps + 1),
        weights: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
    };
    traj.values.push(state.value);
    for t in range.start..range.start + steps {
        let obs = observe(series, norm, t)?;
        let target = allocator.allocate(&obs, &state)?;
        let (next, reward) = step(&state, &target, &series.relatives(t), config.fee_rate)?;
        traj.values.push(next.value);
        traj.weights.push(target);
        traj.rewards.push(reward);
        state = next;
    }
    Ok(traj)
}

/// Runs the policy without adaptation. Stochastic mode draws one RNG stream
/// per day from `seed`.
pub fn run_episode(
    series: &MarketSeries,
    norm: &Normalizer,
    range: Range<usize>,
    params: &PolicyParams,
    mode: ActMode,
    seed: u64,
    config: &EnvConfig,
) -> Result<Trajectory> {
    let mut alloc = |obs: &[f64], state: &PortfolioState| -> Result<Weights> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, &[seed::ACTION_STREAM, state.t as u64]));
        Ok(policy::act(params, obs, mode, Some(&mut rng))?.weights)
    };
    simulate(series, norm, range, config, &mut alloc)
}
