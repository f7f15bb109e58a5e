//! Experiment configuration, read from TOML. Every field has a default, and
//! the fully resolved config is written next to the results.

use std::path::{Path, PathBuf};

use planfolio_core::env::EnvConfig;
use planfolio_core::marketdata::{CsvSchema, SplitDates};
use planfolio_core::pilot::{MpcConfig, Variant};
use planfolio_core::policy::{PolicyConfig, PretrainConfig};
use serde::{Deserialize, Serialize};

use crate::synthetic::SyntheticMarketSpec;
use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Worker threads for independent runs; 0 uses all cores.
    pub workers: usize,
    /// Write per-day planner reports as JSON lines.
    pub log_steps: bool,
    pub data: DataConfig,
    pub env: EnvConfig,
    pub policy: PolicySection,
    pub pretrain: PretrainConfig,
    pub forecast: ForecastConfig,
    pub mpc: MpcConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            out_dir: PathBuf::from("results"),
            seeds: vec![0, 1, 2, 3, 4],
            workers: 0,
            log_steps: false,
            data: DataConfig::default(),
            env: EnvConfig::default(),
            policy: PolicySection::default(),
            pretrain: PretrainConfig::default(),
            forecast: ForecastConfig::default(),
            mpc: MpcConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        #[serde(default)]
        market: SyntheticMarketSpec,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
        #[serde(default = "default_valid_fraction")]
        valid_fraction: f64,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
        /// Split by dates; fractions are used when absent.
        #[serde(default)]
        split_dates: Option<SplitDates>,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
        #[serde(default = "default_valid_fraction")]
        valid_fraction: f64,
    },
}

fn default_train_fraction() -> f64 {
    0.6
}

fn default_valid_fraction() -> f64 {
    0.1
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic {
            market: SyntheticMarketSpec::default(),
            train_fraction: default_train_fraction(),
            valid_fraction: default_valid_fraction(),
        }
    }
}

/// Architecture knobs; input and output sizes follow from the data and the
/// policy kind from the pretraining algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub hidden: Vec<usize>,
    pub shared_trunk: bool,
    pub actor_head_gain: f64,
    pub critic_head_gain: f64,
    pub initial_log_std: f64,
    pub value_scale: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        let d = PolicyConfig::default();
        Self {
            hidden: d.hidden,
            shared_trunk: d.shared_trunk,
            actor_head_gain: d.actor_head_gain,
            critic_head_gain: d.critic_head_gain,
            initial_log_std: d.initial_log_std,
            value_scale: d.value_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastModel {
    Ridge,
    ContextMean,
    PerfectForesight,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    /// Forecaster used when no target R² is swept, and the base of the
    /// synthetic blends when one is.
    pub model: ForecastModel,
    pub ridge_lambda: f64,
    pub external_path: Option<PathBuf>,
    /// Trailing window of the context-mean baseline.
    pub context_window: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            model: ForecastModel::Ridge,
            ridge_lambda: 1.0,
            external_path: None,
            context_window: 30,
        }
    }
}

/// Grid axes. Empty `horizons` / `variants` fall back to the `mpc` section;
/// empty `r2` runs the configured forecaster itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub horizons: Vec<usize>,
    pub r2: Vec<f64>,
    pub variants: Vec<Variant>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let config: Self = toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {}", path.display(), e.message())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn horizons(&self) -> Vec<usize> {
        if self.sweep.horizons.is_empty() {
            vec![self.mpc.horizon]
        } else {
            self.sweep.horizons.clone()
        }
    }

    pub fn variants(&self) -> Vec<Variant> {
        if self.sweep.variants.is_empty() {
            vec![self.mpc.variant]
        } else {
            self.sweep.variants.clone()
        }
    }

    /// Planner settings for one grid cell. Vanilla forces a single
    /// noiseless particle; noise-only drops the risk penalty.
    pub fn mpc_for(&self, horizon: usize, variant: Variant) -> MpcConfig {
        let mut m = MpcConfig {
            horizon,
            variant,
            ..self.mpc.clone()
        };
        match variant {
            Variant::Vanilla => {
                m.particles = 1;
                m.noise_scale = 0.0;
                m.risk_aversion = 0.0;
            }
            Variant::NoiseOnly => m.risk_aversion = 0.0,
            Variant::NoiseLambda => {}
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must not be empty".into()));
        }
        self.env.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        for h in self.horizons() {
            for v in self.variants() {
                self.mpc_for(h, v).validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            }
        }
        if let Some(r) = self.sweep.r2.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(HarnessError::Config(format!("target R² {r} outside [0, 1]")));
        }
        if self.forecast.context_window == 0 {
            return Err(HarnessError::Config("context_window must be >= 1".into()));
        }
        if self.forecast.model == ForecastModel::External && self.forecast.external_path.is_none() {
            return Err(HarnessError::Config("forecast.model = external needs forecast.external_path".into()));
        }
        if !(self.forecast.ridge_lambda >= 0.0) {
            return Err(HarnessError::Config("ridge_lambda must be >= 0".into()));
        }
        if let DataConfig::Synthetic { market, .. } = &self.data {
            market.validate()?;
        }
        Ok(())
    }

    /// Applies a `--axis key=v1,v2,...` override (`h`, `r2` or `variant`).
    pub fn apply_axis(&mut self, axis: &str) -> Result<()> {
        let (key, values) = axis
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("axis `{axis}` is not key=v1,v2,...")))?;
        let items: Vec<&str> = values.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        let bad = |v: &str| HarnessError::Config(format!("bad value `{v}` for axis `{key}`"));
        match key.trim() {
            "h" | "horizon" => {
                self.sweep.horizons = items.iter().map(|v| v.parse().map_err(|_| bad(v))).collect::<Result<_>>()?;
            }
            "r2" => {
                self.sweep.r2 = items.iter().map(|v| v.parse().map_err(|_| bad(v))).collect::<Result<_>>()?;
            }
            "variant" => {
                self.sweep.variants = items
                    .iter()
                    .map(|v| serde_json::from_value(serde_json::Value::String(v.to_string())).map_err(|_| bad(v)))
                    .collect::<Result<_>>()?;
            }
            other => return Err(HarnessError::Config(format!("unknown axis `{other}` (use h, r2 or variant)"))),
        }
        self.validate()
    }
}
