//! Actor-critic MLP whose parameters are adapted at inference time.
//!
//! The actor maps a flat observation to `N + 1` mean logits; allocations are
//! the softmax of those logits (deterministic head) or of
//! `mean + exp(log_std) ⊙ z`, `z ~ N(0, I)` (stochastic head, reparameterized
//! so sampled allocations stay differentiable). The critic is a scalar head,
//! on its own trunk unless `shared_trunk` is set.
//!
//! All parameters live in one flat buffer described by a tensor layout; the
//! tape-based forward in [`TapeNet`] maps gradients straight onto it.

mod checkpoint;
mod pretrain;
pub mod tape;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{softmax, Weights};
use crate::seed;
pub use checkpoint::{checkpoint, load_checkpoint, restore, save_checkpoint, Snapshot, CHECKPOINT_VERSION};
pub use pretrain::{pretrain, PretrainAlgo, PretrainConfig, PretrainReport};
use tape::{Tape, Var};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("non-finite activation in layer {layer}")]
    Numeric { layer: usize },
    #[error("invalid policy config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("stochastic action requested without an rng")]
    MissingRng,
    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Tape(#[from] tape::TapeError),
}

pub type Result<T, E = PolicyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    Deterministic,
    Stochastic,
}

/// How an action is drawn from the actor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    Deterministic,
    Stochastic,
}

impl From<PolicyMode> for ActMode {
    fn from(m: PolicyMode) -> Self {
        match m {
            PolicyMode::Deterministic => ActMode::Deterministic,
            PolicyMode::Stochastic => ActMode::Stochastic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Gram-Schmidt orthonormalized Gaussian matrices scaled by a per-layer
    /// gain (5/3 for tanh trunks), zero biases.
    Orthogonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// `N × 11`
    pub input_dim: usize,
    /// `N + 1`
    pub n_actions: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub mode: PolicyMode,
    pub shared_trunk: bool,
    pub init: InitScheme,
    pub init_seed: u64,
    pub actor_head_gain: f64,
    pub critic_head_gain: f64,
    pub initial_log_std: f64,
    /// Critic outputs are `value_scale × head`, in currency units.
    pub value_scale: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            input_dim: 0,
            n_actions: 0,
            hidden: vec![128, 128],
            activation: Activation::Tanh,
            mode: PolicyMode::Stochastic,
            shared_trunk: false,
            init: InitScheme::Orthogonal,
            init_seed: 0,
            actor_head_gain: 0.01,
            critic_head_gain: 1.0,
            initial_log_std: -0.5,
            value_scale: 1000.0,
        }
    }
}

impl PolicyConfig {
    pub fn for_assets(n_assets: usize) -> Self {
        Self {
            input_dim: n_assets * crate::marketdata::FEATURE_COUNT,
            n_actions: n_assets + 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_actions < 2 {
            return Err(PolicyError::Config(format!(
                "input_dim {} / n_actions {} must be positive (n_actions >= 2)",
                self.input_dim, self.n_actions
            )));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(PolicyError::Config(format!("hidden sizes {:?} must be non-empty and >= 1", self.hidden)));
        }
        if !(self.value_scale > 0.0) {
            return Err(PolicyError::Config("value_scale must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Actor,
    Critic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub role: Role,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Indices into the layout for one dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Architecture {
    actor_trunk: Vec<Dense>,
    actor_head: Dense,
    log_std: usize,
    critic_trunk: Vec<Dense>,
    critic_head: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    config: PolicyConfig,
    layout: Vec<TensorSpec>,
    arch: Architecture,
    data: Vec<f64>,
}

fn push_tensor(layout: &mut Vec<TensorSpec>, name: String, role: Role, rows: usize, cols: usize) -> usize {
    let offset = layout.last().map(|t| t.offset + t.len()).unwrap_or(0);
    layout.push(TensorSpec {
        name,
        role,
        rows,
        cols,
        offset,
    });
    layout.len() - 1
}

fn push_dense(layout: &mut Vec<TensorSpec>, prefix: &str, role: Role, out: usize, inp: usize) -> Dense {
    Dense {
        w: push_tensor(layout, format!("{prefix}.w"), role, out, inp),
        b: push_tensor(layout, format!("{prefix}.b"), role, out, 1),
    }
}

fn build_layout(config: &PolicyConfig) -> (Vec<TensorSpec>, Architecture) {
    let mut layout = Vec::new();
    let dense = push_dense;
    let tensor = push_tensor;
    let mut actor_trunk = Vec::new();
    let mut inp = config.input_dim;
    for (i, &h) in config.hidden.iter().enumerate() {
        actor_trunk.push(dense(&mut layout, &format!("actor.{i}"), Role::Actor, h, inp));
        inp = h;
    }
    let trunk_out = inp;
    let actor_head = dense(&mut layout, "actor.head", Role::Actor, config.n_actions, trunk_out);
    let log_std = tensor(&mut layout, "actor.log_std".into(), Role::Actor, config.n_actions, 1);
    let mut critic_trunk = Vec::new();
    if !config.shared_trunk {
        let mut inp = config.input_dim;
        for (i, &h) in config.hidden.iter().enumerate() {
            critic_trunk.push(dense(&mut layout, &format!("critic.{i}"), Role::Critic, h, inp));
            inp = h;
        }
    }
    let critic_head = dense(&mut layout, "critic.head", Role::Critic, 1, trunk_out);
    (
        layout,
        Architecture {
            actor_trunk,
            actor_head,
            log_std,
            critic_trunk,
            critic_head,
        },
    )
}

/// Orthonormal rows (or columns, whichever is fewer) scaled by `gain`.
fn orthogonal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gain: f64) -> Vec<f64> {
    let transpose = rows < cols;
    let (n, m) = if transpose { (rows, cols) } else { (cols, rows) };
    // n vectors of length m, n <= m
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n);
    while vecs.len() < n {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for u in &vecs {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            vecs.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = gain * if transpose { vecs[r][c] } else { vecs[c][r] };
        }
    }
    out
}

impl PolicyParams {
    pub fn new(config: PolicyConfig) -> Result<Self> {
        config.validate()?;
        let (layout, arch) = build_layout(&config);
        let total = layout.last().map(|t| t.offset + t.len()).unwrap_or(0);
        let mut params = Self {
            config,
            layout,
            arch,
            data: vec![0.0; total],
        };
        params.initialize();
        Ok(params)
    }

    /// Same architecture, every parameter zero.
    pub fn zeros(config: PolicyConfig) -> Result<Self> {
        let mut p = Self::new(config)?;
        p.data.iter_mut().for_each(|x| *x = 0.0);
        Ok(p)
    }

    fn initialize(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(self.config.init_seed, &[seed::INIT_STREAM]));
        let trunk_gain = 5.0 / 3.0;
        let dense: Vec<(Dense, f64)> = self
            .arch
            .actor_trunk
            .iter()
            .map(|d| (*d, trunk_gain))
            .chain([(self.arch.actor_head, self.config.actor_head_gain)])
            .chain(self.arch.critic_trunk.iter().map(|d| (*d, trunk_gain)))
            .chain([(self.arch.critic_head, self.config.critic_head_gain)])
            .collect();
        for (d, gain) in dense {
            let spec = self.layout[d.w].clone();
            let w = orthogonal(&mut rng, spec.rows, spec.cols, gain);
            self.data[spec.range()].copy_from_slice(&w);
            let b = self.layout[d.b].range();
            self.data[b].iter_mut().for_each(|x| *x = 0.0);
        }
        let ls = self.layout[self.arch.log_std].range();
        let v = self.config.initial_log_std;
        self.data[ls].iter_mut().for_each(|x| *x = v);
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn layout(&self) -> &[TensorSpec] {
        &self.layout
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.data.len() {
            return Err(PolicyError::Shape(format!("{} values for {} parameters", flat.len(), self.data.len())));
        }
        self.data.copy_from_slice(flat);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Mask with `true` at every actor parameter.
    pub fn actor_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.data.len()];
        for t in self.layout.iter().filter(|t| t.role == Role::Actor) {
            mask[t.range()].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorSpec> {
        self.layout.iter().find(|t| t.name == name)
    }

    pub fn log_std(&self) -> &[f64] {
        &self.data[self.layout[self.arch.log_std].range()]
    }

    fn slice(&self, idx: usize) -> &[f64] {
        &self.data[self.layout[idx].range()]
    }

    fn dense_forward(&self, d: Dense, x: &[f64], activate: bool) -> Vec<f64> {
        let spec = &self.layout[d.w];
        let w = self.slice(d.w);
        let b = self.slice(d.b);
        w.chunks_exact(spec.cols)
            .zip(b)
            .map(|(row, bias)| {
                let z = row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + bias;
                if activate {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    fn trunk(&self, layers: &[Dense], x: &[f64], first_layer: usize) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for (i, d) in layers.iter().enumerate() {
            h = self.dense_forward(*d, &h, true);
            if h.iter().any(|v| !v.is_finite()) {
                return Err(PolicyError::Numeric { layer: first_layer + i });
            }
        }
        Ok(h)
    }

    fn check_input(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.config.input_dim {
            return Err(PolicyError::Shape(format!(
                "observation length {} for input_dim {}",
                obs.len(),
                self.config.input_dim
            )));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::Numeric { layer: 0 });
        }
        Ok(())
    }

    /// Mean logits of the actor.
    pub fn actor_mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_input(obs)?;
        let h = self.trunk(&self.arch.actor_trunk, obs, 1)?;
        let out = self.dense_forward(self.arch.actor_head, &h, false);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::Numeric {
                layer: self.arch.actor_trunk.len() + 1,
            });
        }
        Ok(out)
    }
}

/// Output of [`act`].
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub logits: Vec<f64>,
    pub weights: Weights,
    pub log_prob: Option<f64>,
}

/// Gaussian log-density of `logits` under `N(mean, exp(log_std)²)`.
pub fn gaussian_log_prob(logits: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    logits
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - half_ln_2pi
        })
        .sum()
}

/// Draws `z ~ N(0, I)` of the action dimension.
pub fn sample_action_noise(rng: &mut impl Rng, n_actions: usize) -> Vec<f64> {
    (0..n_actions).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn act(params: &PolicyParams, obs: &[f64], mode: ActMode, rng: Option<&mut ChaCha8Rng>) -> Result<Action> {
    let mean = params.actor_mean(obs)?;
    match mode {
        ActMode::Deterministic => {
            let weights = Weights::new(softmax(&mean)).map_err(|e| PolicyError::Shape(e.to_string()))?;
            Ok(Action {
                logits: mean,
                weights,
                log_prob: None,
            })
        }
        ActMode::Stochastic => {
            let rng = rng.ok_or(PolicyError::MissingRng)?;
            let z = sample_action_noise(rng, mean.len());
            act_with_noise(params, &mean, &z)
        }
    }
}

/// Stochastic action for a given standard-normal draw `z`.
pub fn act_with_noise(params: &PolicyParams, mean: &[f64], z: &[f64]) -> Result<Action> {
    let log_std = params.log_std();
    let logits: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .zip(z)
        .map(|((m, ls), e)| m + ls.exp() * e)
        .collect();
    let log_prob = gaussian_log_prob(&logits, mean, log_std);
    let weights = Weights::new(softmax(&logits)).map_err(|e| PolicyError::Shape(e.to_string()))?;
    Ok(Action {
        logits,
        weights,
        log_prob: Some(log_prob),
    })
}

/// Critic estimate in currency units.
pub fn value(params: &PolicyParams, obs: &[f64]) -> Result<f64> {
    params.check_input(obs)?;
    let arch = &params.arch;
    let h = if params.config.shared_trunk {
        params.trunk(&arch.actor_trunk, obs, 1)?
    } else {
        params.trunk(&arch.critic_trunk, obs, 1)?
    };
    let v = params.dense_forward(arch.critic_head, &h, false)[0] * params.config.value_scale;
    if !v.is_finite() {
        return Err(PolicyError::Numeric {
            layer: params.config.hidden.len() + 1,
        });
    }
    Ok(v)
}

/// Parameter leaves registered on one tape.
pub struct TapeNet<'p> {
    params: &'p PolicyParams,
    vars: Vec<Var>,
}

impl<'p> TapeNet<'p> {
    pub fn new(tape: &mut Tape, params: &'p PolicyParams) -> Self {
        let vars = params
            .layout
            .iter()
            .map(|t| tape.param(t.offset, &params.data[t.range()]))
            .collect();
        Self { params, vars }
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.layout.iter().position(|t| t.name == name).map(|i| self.vars[i])
    }

    fn dense(&self, tape: &mut Tape, d: Dense, x: Var, activate: bool) -> Var {
        let spec = &self.params.layout[d.w];
        let z = tape.matvec(self.vars[d.w], x, spec.rows, spec.cols);
        let z = tape.add(z, self.vars[d.b]);
        if activate {
            tape.tanh(z)
        } else {
            z
        }
    }

    fn trunk(&self, tape: &mut Tape, layers: &[Dense], x: Var) -> Var {
        layers.iter().fold(x, |h, d| self.dense(tape, *d, h, true))
    }

    pub fn actor_mean(&self, tape: &mut Tape, x: Var) -> Var {
        let h = self.trunk(tape, &self.params.arch.actor_trunk, x);
        self.dense(tape, self.params.arch.actor_head, h, false)
    }

    /// Allocation weights on the tape. `noise` is the reparameterization draw
    /// for stochastic actions; `None` gives the deterministic head.
    pub fn weights(&self, tape: &mut Tape, x: Var, noise: Option<&[f64]>) -> Var {
        let mean = self.actor_mean(tape, x);
        let logits = match noise {
            None => mean,
            Some(z) => {
                let std = tape.exp(self.vars[self.params.arch.log_std]);
                let z = tape.constant(z.to_vec());
                let eps = tape.mul(std, z);
                tape.add(mean, eps)
            }
        };
        tape.softmax(logits)
    }

    /// Critic estimate. With `detach`, the value is computed off-tape and
    /// entered as a constant.
    pub fn value(&self, tape: &mut Tape, x: Var, detach: bool) -> Result<Var> {
        if detach {
            let v = value(self.params, tape.value(x))?;
            return Ok(tape.scalar_constant(v));
        }
        let arch = &self.params.arch;
        let layers = if self.params.config.shared_trunk {
            &arch.actor_trunk
        } else {
            &arch.critic_trunk
        };
        let h = self.trunk(tape, layers, x);
        let v = self.dense(tape, arch.critic_head, h, false);
        Ok(tape.scale(v, self.params.config.value_scale))
    }

    /// Gaussian log-density of constant `logits` under the actor.
    pub fn log_prob(&self, tape: &mut Tape, x: Var, logits: &[f64]) -> Var {
        let mean = self.actor_mean(tape, x);
        let a = tape.constant(logits.to_vec());
        let diff = tape.sub(a, mean);
        let ls = self.vars[self.params.arch.log_std];
        let std = tape.exp(ls);
        let z = tape.div(diff, std);
        let z2 = tape.mul(z, z);
        let z2 = tape.scale(z2, -0.5);
        let lp = tape.sub(z2, ls);
        let lp = tape.offset(lp, -0.5 * (2.0 * std::f64::consts::PI).ln());
        tape.sum(lp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: PolicyMode) -> PolicyConfig {
        PolicyConfig {
            input_dim: 6,
            n_actions: 3,
            hidden: vec![5, 4],
            mode,
            init_seed: 11,
            actor_head_gain: 1.0,
            ..PolicyConfig::default()
        }
    }

    fn obs() -> Vec<f64> {
        vec![0.3, -1.2, 0.8, 0.05, -0.4, 1.1]
    }

    #[test]
    fn zero_network_is_uniform_and_zero_valued() {
        let p = PolicyParams::zeros(small(PolicyMode::Deterministic)).unwrap();
        let a = act(&p, &obs(), ActMode::Deterministic, None).unwrap();
        assert!(a.weights.as_slice().iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(value(&p, &obs()).unwrap(), 0.0);
    }

    #[test]
    fn vanishing_std_matches_deterministic() {
        let mut p = PolicyParams::new(small(PolicyMode::Stochastic)).unwrap();
        let ls = p.tensor("actor.log_std").unwrap().range();
        p.flat_mut()[ls].iter_mut().for_each(|x| *x = -40.0);
        let det = act(&p, &obs(), ActMode::Deterministic, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sto = act(&p, &obs(), ActMode::Stochastic, Some(&mut rng)).unwrap();
        for (a, b) in det.weights.as_slice().iter().zip(sto.weights.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn stochastic_is_seed_deterministic() {
        let p = PolicyParams::new(small(PolicyMode::Stochastic)).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let a = act(&p, &obs(), ActMode::Stochastic, Some(&mut r1)).unwrap();
        let b = act(&p, &obs(), ActMode::Stochastic, Some(&mut r2)).unwrap();
        assert_eq!(a, b);
        assert!(act(&p, &obs(), ActMode::Stochastic, None).is_err());
    }

    #[test]
    fn critic_weight_perturbation_changes_value() {
        let mut p = PolicyParams::new(small(PolicyMode::Deterministic)).unwrap();
        let v0 = value(&p, &obs()).unwrap();
        let head = p.tensor("critic.head.w").unwrap().range();
        let h = 1e-5;
        p.flat_mut()[head.start] += h;
        let v1 = value(&p, &obs()).unwrap();
        assert!(v0.is_finite());
        assert!((v1 - v0).abs() > 0.0);
    }

    #[test]
    fn orthogonal_init_has_orthonormal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = orthogonal(&mut rng, 3, 7, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..7).map(|c| w[i * 7 + c] * w[j * 7 + c]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let p = PolicyParams::new(small(PolicyMode::Stochastic)).unwrap();
        let mut tape = Tape::new(p.len());
        let net = TapeNet::new(&mut tape, &p);
        let x = tape.constant(obs());
        let m = net.actor_mean(&mut tape, x);
        let v = net.value(&mut tape, x, false).unwrap();
        let mean = p.actor_mean(&obs()).unwrap();
        for (a, b) in tape.value(m).iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((tape.scalar(v) - value(&p, &obs()).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn nan_input_reports_layer() {
        let p = PolicyParams::new(small(PolicyMode::Deterministic)).unwrap();
        let mut o = obs();
        o[2] = f64::NAN;
        assert!(matches!(p.actor_mean(&o), Err(PolicyError::Numeric { layer: 0 })));
    }
}
