//! Inference-time adaptation of the actor against a forecaster.
//!
//! At each trading day `t` the planner
//!
//! 1. builds an action-independent cache: the forecast price path, imagined
//!    states (optionally perturbed into `K` particles), and the frozen
//!    critic's terminal values;
//! 2. runs `E` epochs of plain gradient ascent on the planning objective,
//!    differentiating only through the actor;
//! 3. executes the adapted policy's deterministic allocation on the real
//!    state `s_t`.
//!
//! Per particle, `J = Σ_{h<H} γ^h r̂_h + γ^H V(s̃_{t+H})` where the rollout at
//! `h = 0` acts on the real observation and `r̂` is the fee-aware imagined
//! reward. Particle returns are measured as a fraction of the portfolio
//! value at `t` so the step size does not depend on account size. The risk
//! objective is `J̄ − λ sqrt(D + ε)` with `D` the downside semi-variance of
//! the particle returns around their mean.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{self, EnvConfig, EnvError, PortfolioState, Trajectory, Weights};
use crate::forecast::{forecast, perturb, ForecastError, Forecaster, NoiseCalibration};
use crate::marketdata::{MarketSeries, Normalizer};
use crate::policy::tape::{Tape, TapeError, Var};
use crate::policy::{self, checkpoint, restore, sample_action_noise, ActMode, PolicyError, PolicyMode, PolicyParams, TapeNet};
use crate::seed;

#[derive(Debug, Error)]
pub enum PilotError {
    #[error("invalid planner config: {0}")]
    Config(String),
    #[error("non-finite imagined reward at particle {k}, horizon step {h}")]
    Numeric { k: usize, h: usize },
    #[error("non-finite gradient at epoch {epoch}")]
    Gradient { epoch: usize },
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Tape(#[from] TapeError),
}

pub type Result<T, E = PilotError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Single deterministic trajectory, mean return objective.
    Vanilla,
    /// Noisy particles, `λ = 0`.
    NoiseOnly,
    /// Noisy particles with the downside penalty.
    NoiseLambda,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Vanilla => "vanilla",
            Variant::NoiseOnly => "noise_only",
            Variant::NoiseLambda => "noise_lambda",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetMode {
    /// Adapted parameters carry over to the next day.
    #[default]
    Persist,
    /// Parameters are restored to their step-entry values after execution.
    ResetEachStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub particles: usize,
    pub epochs: usize,
    pub step_size: f64,
    pub gamma: f64,
    pub risk_aversion: f64,
    pub noise_scale: f64,
    pub eps_num: f64,
    pub variant: Variant,
    pub reset_mode: ResetMode,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            particles: 1,
            epochs: 5,
            step_size: 1.0,
            gamma: 0.99,
            risk_aversion: 0.0,
            noise_scale: 0.0,
            eps_num: 1e-8,
            variant: Variant::Vanilla,
            reset_mode: ResetMode::Persist,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(PilotError::Config(m));
        if self.horizon == 0 {
            return fail("horizon must be >= 1".into());
        }
        if self.particles == 0 {
            return fail("particles must be >= 1".into());
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return fail(format!("step size {} must be finite and >= 0", self.step_size));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma {} must lie in [0, 1)", self.gamma));
        }
        if !(self.risk_aversion >= 0.0) {
            return fail(format!("risk aversion {} must be >= 0", self.risk_aversion));
        }
        if !(self.noise_scale >= 0.0) {
            return fail(format!("noise scale {} must be >= 0", self.noise_scale));
        }
        if !(self.eps_num > 0.0) {
            return fail(format!("eps_num {} must be > 0", self.eps_num));
        }
        match self.variant {
            Variant::Vanilla if self.particles != 1 || self.noise_scale != 0.0 || self.risk_aversion != 0.0 => {
                fail("vanilla requires particles = 1, noise_scale = 0, risk_aversion = 0".into())
            }
            Variant::NoiseOnly if self.risk_aversion != 0.0 => fail("noise_only requires risk_aversion = 0".into()),
            _ => Ok(()),
        }
    }
}

/// Fee-aware reward of moving from `prev_weights` to `weights` at value
/// `value` when asset prices move by `relatives` (assets only).
pub fn imagined_reward(value: f64, prev_weights: &[f64], weights: &[f64], relatives: &[f64], fee_rate: f64) -> f64 {
    let l1: f64 = weights.iter().zip(prev_weights).map(|(a, b)| (a - b).abs()).sum();
    let delta = fee_rate * value * l1;
    let rho: f64 = weights[1..].iter().zip(relatives).map(|(w, r)| w * (r - 1.0)).sum();
    (value - delta) * (1.0 + rho) - value
}

/// `Σ γ^h r_h + γ^H bootstrap`.
pub fn discounted_return(rewards: &[f64], bootstrap: f64, gamma: f64) -> f64 {
    let mut j = 0.0;
    let mut g = 1.0;
    for r in rewards {
        j += g * r;
        g *= gamma;
    }
    j + g * bootstrap
}

/// `(J̄, D, J̄ − λ sqrt(D + ε))` over particle returns.
pub fn risk_objective(returns: &[f64], lambda: f64, eps: f64) -> (f64, f64, f64) {
    let k = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / k;
    let down = returns.iter().map(|j| (j - mean).min(0.0).powi(2)).sum::<f64>() / k;
    (mean, down, mean - lambda * (down + eps).sqrt())
}

/// One imagined trajectory. `states[0]` is the real observation at `t`;
/// `states[h]` for `h >= 1` is the (possibly perturbed) imagined state at
/// `t + h`; the last entry feeds the bootstrap only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub states: Vec<Vec<f64>>,
    /// Critic value of the terminal imagined state, in currency.
    pub bootstrap: f64,
    /// Reparameterization draws per horizon step for stochastic policies.
    pub action_noise: Option<Vec<Vec<f64>>>,
}

/// Everything that stays fixed across the adaptation epochs of one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCache {
    pub t: usize,
    pub value: f64,
    /// Real drifted weights entering day `t`.
    pub weights: Vec<f64>,
    /// `relatives[h]` has cash (1.0) first, then assets.
    pub relatives: Vec<Vec<f64>>,
    pub particles: Vec<Particle>,
}

impl PlanCache {
    pub fn horizon(&self) -> usize {
        self.relatives.len()
    }
}

fn stochastic(params: &PolicyParams) -> bool {
    params.config().mode == PolicyMode::Stochastic
}

fn action_noise(params: &PolicyParams, seed: u64, t: usize, k: usize, horizon: usize) -> Option<Vec<Vec<f64>>> {
    stochastic(params).then(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, &[seed::PLAN_STREAM, t as u64, k as u64]));
        let n = params.config().n_actions;
        (0..horizon).map(|_| sample_action_noise(&mut rng, n)).collect()
    })
}

/// Builds the per-day cache. Vanilla uses the deterministic forecast as its
/// single particle; the other variants draw `K` perturbed copies.
#[allow(clippy::too_many_arguments)]
pub fn prepare(
    params: &PolicyParams,
    series: &MarketSeries,
    norm: &Normalizer,
    state: &PortfolioState,
    forecaster: &dyn Forecaster,
    calib: &NoiseCalibration,
    config: &MpcConfig,
    seed: u64,
) -> Result<PlanCache> {
    let t = state.t;
    let h = config.horizon;
    let traj = forecast(forecaster, series, t, h)?;
    let relatives = traj
        .relatives()
        .into_iter()
        .map(|r| std::iter::once(1.0).chain(r).collect())
        .collect();
    let obs = env::observe(series, norm, t)?;
    let imagined = traj.normalized_states(norm);
    let sets: Vec<Vec<Vec<f64>>> = match config.variant {
        Variant::Vanilla => vec![imagined],
        Variant::NoiseOnly | Variant::NoiseLambda => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, &[seed::STATE_NOISE_STREAM, t as u64]));
            perturb(&imagined, calib, config.noise_scale, config.particles, &mut rng)?
        }
    };
    let particles = sets
        .into_iter()
        .enumerate()
        .map(|(k, imagined)| {
            let bootstrap = policy::value(params, &imagined[h - 1])?;
            let mut states = Vec::with_capacity(h + 1);
            states.push(obs.clone());
            states.extend(imagined);
            Ok(Particle {
                states,
                bootstrap,
                action_noise: action_noise(params, seed, t, k, h),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlanCache {
        t,
        value: state.value,
        weights: state.weights.as_slice().to_vec(),
        relatives,
        particles,
    })
}

/// Records one particle's return (as a fraction of the day's value) on the
/// tape.
fn particle_return(tape: &mut Tape, net: &TapeNet, cache: &PlanCache, k: usize, gamma: f64, fee_rate: f64) -> Result<Var> {
    let p = &cache.particles[k];
    let mut value = tape.scalar_constant(cache.value);
    let mut prev = tape.constant(cache.weights.clone());
    let mut total: Option<Var> = None;
    let mut discount = 1.0;
    for (h, rel) in cache.relatives.iter().enumerate() {
        let x = tape.constant(p.states[h].clone());
        let noise = p.action_noise.as_ref().map(|z| z[h].as_slice());
        let w = net.weights(tape, x, noise);

        let diff = tape.sub(w, prev);
        let diff = tape.abs(diff);
        let l1 = tape.sum(diff);
        let fee = tape.mul(l1, value);
        let fee = tape.scale(fee, fee_rate);
        let net_value = tape.sub(value, fee);
        let excess = tape.constant(rel.iter().map(|r| r - 1.0).collect());
        let rho = tape.dot(w, excess);
        let growth = tape.offset(rho, 1.0);
        let next_value = tape.mul(net_value, growth);
        let reward = tape.sub(next_value, value);
        if !tape.scalar(reward).is_finite() {
            return Err(PilotError::Numeric { k, h });
        }

        let term = tape.scale(reward, discount);
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term),
        });
        discount *= gamma;

        let rel_var = tape.constant(rel.clone());
        let moved = tape.mul(w, rel_var);
        let gross = tape.sum(moved);
        prev = tape.div(moved, gross);
        value = next_value;
    }
    let total = total.expect("horizon >= 1");
    let total = tape.offset(total, discount * p.bootstrap);
    Ok(tape.scale(total, 1.0 / cache.value))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub mean: f64,
    pub downside: f64,
    pub returns: Vec<f64>,
    /// Gradient of the objective over the full parameter vector.
    pub grad: Option<Vec<f64>>,
}

/// Single-trajectory objective: `𝒥 = J`.
fn vanilla_objective(params: &PolicyParams, cache: &PlanCache, config: &MpcConfig, fee_rate: f64, grad: bool) -> Result<Evaluation> {
    let mut tape = Tape::new(params.len());
    let net = TapeNet::new(&mut tape, params);
    let j = particle_return(&mut tape, &net, cache, 0, config.gamma, fee_rate)?;
    let value = tape.scalar(j);
    let grad = if grad { Some(tape.backward(j)?.into_params()) } else { None };
    Ok(Evaluation {
        objective: value,
        mean: value,
        downside: 0.0,
        returns: vec![value],
        grad,
    })
}

/// Particle objective `J̄ − λ sqrt(D + ε)`.
fn particle_objective(params: &PolicyParams, cache: &PlanCache, config: &MpcConfig, fee_rate: f64, grad: bool) -> Result<Evaluation> {
    let mut tape = Tape::new(params.len());
    let net = TapeNet::new(&mut tape, params);
    let returns = (0..cache.particles.len())
        .map(|k| particle_return(&mut tape, &net, cache, k, config.gamma, fee_rate))
        .collect::<Result<Vec<_>>>()?;
    let k = returns.len() as f64;
    let sum = returns[1..].iter().fold(returns[0], |acc, j| tape.add(acc, *j));
    let mean = tape.scale(sum, 1.0 / k);
    let mut down: Option<Var> = None;
    for j in &returns {
        let d = tape.sub(*j, mean);
        let d = tape.min_zero(d);
        let d2 = tape.mul(d, d);
        down = Some(match down {
            None => d2,
            Some(acc) => tape.add(acc, d2),
        });
    }
    let down = tape.scale(down.expect("K >= 1"), 1.0 / k);
    let spread = tape.offset(down, config.eps_num);
    let spread = tape.sqrt(spread);
    let penalty = tape.scale(spread, config.risk_aversion);
    let objective = tape.sub(mean, penalty);
    let eval = Evaluation {
        objective: tape.scalar(objective),
        mean: tape.scalar(mean),
        downside: tape.scalar(down),
        returns: returns.iter().map(|j| tape.scalar(*j)).collect(),
        grad: None,
    };
    let grad = if grad { Some(tape.backward(objective)?.into_params()) } else { None };
    Ok(Evaluation { grad, ..eval })
}

/// Evaluates the planning objective for `params` against a fixed cache.
pub fn evaluate(params: &PolicyParams, cache: &PlanCache, config: &MpcConfig, fee_rate: f64, grad: bool) -> Result<Evaluation> {
    match config.variant {
        Variant::Vanilla => vanilla_objective(params, cache, config, fee_rate, grad),
        Variant::NoiseOnly | Variant::NoiseLambda => particle_objective(params, cache, config, fee_rate, grad),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub t: usize,
    pub objective_before: f64,
    pub objective_after: f64,
    pub mean_return: f64,
    pub downside: f64,
    pub grad_norms: Vec<f64>,
    pub weights: Vec<f64>,
    /// Realized reward of the executed allocation; filled in by [`run_pilot`].
    pub reward: f64,
    /// Set when adaptation was abandoned and the unadapted action executed.
    pub failure: Option<String>,
}

/// One planning day: adapts `params` in place (unless `reset_each_step`)
/// and returns the allocation to execute at `state.t`.
#[allow(clippy::too_many_arguments)]
pub fn adapt_step(
    params: &mut PolicyParams,
    series: &MarketSeries,
    norm: &Normalizer,
    state: &PortfolioState,
    forecaster: &dyn Forecaster,
    calib: &NoiseCalibration,
    config: &MpcConfig,
    fee_rate: f64,
    seed: u64,
) -> Result<(Weights, StepReport)> {
    let t = state.t;
    let obs = env::observe(series, norm, t)?;
    let mut report = StepReport {
        t,
        objective_before: f64::NAN,
        objective_after: f64::NAN,
        mean_return: f64::NAN,
        downside: f64::NAN,
        grad_norms: Vec::new(),
        weights: Vec::new(),
        reward: 0.0,
        failure: None,
    };
    if config.epochs == 0 {
        let w = policy::act(params, &obs, ActMode::Deterministic, None)?.weights;
        report.weights = w.as_slice().to_vec();
        return Ok((w, report));
    }

    let entry = checkpoint(params);
    let cache = prepare(params, series, norm, state, forecaster, calib, config, seed)?;
    let outcome = (|| -> Result<Evaluation> {
        let mut last = None;
        for epoch in 0..config.epochs {
            let eval = evaluate(params, &cache, config, fee_rate, true)?;
            let g = eval.grad.as_ref().expect("gradient requested");
            let norm2 = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm2.is_finite() {
                return Err(PilotError::Gradient { epoch });
            }
            if epoch == 0 {
                report.objective_before = eval.objective;
                report.mean_return = eval.mean;
                report.downside = eval.downside;
            }
            report.grad_norms.push(norm2);
            let alpha = config.step_size;
            params.flat_mut().iter_mut().zip(g).for_each(|(p, d)| *p += alpha * d);
            last = Some(eval);
        }
        let after = evaluate(params, &cache, config, fee_rate, false)?;
        report.objective_after = after.objective;
        Ok(last.expect("epochs >= 1"))
    })();

    let weights = match outcome.and_then(|_| Ok(policy::act(params, &obs, ActMode::Deterministic, None)?.weights)) {
        Ok(w) => w,
        Err(e @ (PilotError::Numeric { .. } | PilotError::Gradient { .. } | PilotError::Policy(_) | PilotError::Tape(_))) => {
            restore(params, &entry)?;
            report.failure = Some(e.to_string());
            policy::act(params, &obs, ActMode::Deterministic, None)?.weights
        }
        Err(e) => return Err(e),
    };
    if config.reset_mode == ResetMode::ResetEachStep {
        restore(params, &entry)?;
    }
    report.weights = weights.as_slice().to_vec();
    Ok((weights, report))
}

/// Full backtest over `range` with per-day adaptation. With `epochs = 0` it
/// reproduces [`env::run_episode`] in deterministic mode.
#[allow(clippy::too_many_arguments)]
pub fn run_pilot(
    series: &MarketSeries,
    norm: &Normalizer,
    range: Range<usize>,
    params: &PolicyParams,
    forecaster: &dyn Forecaster,
    calib: &NoiseCalibration,
    config: &MpcConfig,
    env_config: &EnvConfig,
    seed: u64,
) -> Result<(Trajectory, Vec<StepReport>)> {
    config.validate()?;
    let mut working = params.clone();
    let mut reports = Vec::new();
    let mut error = None;
    let mut alloc = |_obs: &[f64], state: &PortfolioState| -> env::Result<Weights> {
        match adapt_step(
            &mut working,
            series,
            norm,
            state,
            forecaster,
            calib,
            config,
            env_config.fee_rate,
            seed,
        ) {
            Ok((w, r)) => {
                reports.push(r);
                Ok(w)
            }
            Err(e) => {
                let msg = e.to_string();
                error = Some(e);
                Err(EnvError::Config(msg))
            }
        }
    };
    let result = env::simulate(series, norm, range, env_config, &mut alloc);
    if let Some(e) = error {
        return Err(e);
    }
    let traj = result?;
    for (r, reward) in reports.iter_mut().zip(&traj.rewards) {
        r.reward = *reward;
    }
    Ok((traj, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imagined_reward_examples() {
        let cash = [1.0, 0.0];
        assert_eq!(imagined_reward(100_000.0, &cash, &cash, &[1.3], 0.001), 0.0);
        let r = imagined_reward(100_000.0, &cash, &[0.5, 0.5], &[1.01], 0.001);
        assert!((r - 399.5).abs() < 1e-9, "{r}");
        let r = imagined_reward(100_000.0, &[0.0, 1.0], &[0.0, 1.0], &[1.02], 0.0);
        assert!((r - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn discounting_fixture() {
        assert!((discounted_return(&[100.0, 40.0], 8.0, 0.5) - 122.0).abs() < 1e-12);
        assert_eq!(discounted_return(&[7.0], 0.0, 1.0), 7.0);
    }

    #[test]
    fn risk_objective_fixtures() {
        let (m, d, o) = risk_objective(&[5.0, 5.0, 5.0], 2.0, 1e-8);
        assert_eq!((m, d), (5.0, 0.0));
        assert!((o - (5.0 - 2.0 * 1e-4)).abs() < 1e-15);
        assert_eq!(risk_objective(&[1.0, 2.0, 3.0], 0.0, 1e-8).2, 2.0);
        let (_, d, o) = risk_objective(&[1.0, 2.0, 3.0], 3.0, 1e-300);
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
        assert!((o - (2.0 - 3f64.sqrt())).abs() < 1e-12);
        assert!((o - 0.267949).abs() < 1e-6);
    }

    #[test]
    fn lambda_never_helps() {
        let js = [0.3, -0.2, 0.9, 0.1];
        let mut prev = f64::INFINITY;
        for l in [0.0, 0.5, 1.0, 4.0] {
            let o = risk_objective(&js, l, 1e-8).2;
            assert!(o < prev);
            prev = o;
        }
    }

    #[test]
    fn variant_constraints() {
        let mut c = MpcConfig::default();
        c.validate().unwrap();
        c.particles = 4;
        assert!(c.validate().is_err());
        c.variant = Variant::NoiseOnly;
        c.validate().unwrap();
        c.risk_aversion = 1.0;
        assert!(c.validate().is_err());
        c.variant = Variant::NoiseLambda;
        c.validate().unwrap();
        c.gamma = 1.0;
        assert!(c.validate().is_err());
    }
}
