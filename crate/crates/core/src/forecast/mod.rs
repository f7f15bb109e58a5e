//! Price forecasters and the imagined trajectories built from them.
//!
//! A forecaster predicts one-step close movements `Δp_{t+h} = p_{t+h} -
//! p_{t+h-1}` for `h = 1..=H` from base day `t`, using nothing after `t`
//! (the cheating forecaster is the deliberate exception). Movements are
//! composed into a price path, and imagined feature states are computed from
//! the realized closes up to `t` spliced with the predicted path. Intraday
//! features of imagined days use a flat bar at the predicted close, so
//! `z_open = z_high = z_low = z_adj = 0` before normalization.

mod cheat;
mod external;
mod ridge;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::{feature_row, DataError, MarketSeries, Normalizer, StateFeatures, WARMUP};

pub use cheat::{blend, calibrate_cheat, calibration_set, r_squared, CalibrationSet, CheatCalibration, CheatForecaster};
pub use external::{write_forecast_csv, ExternalForecaster};
pub use ridge::{fit_ridge, RidgeForecaster, RidgeModel, MIN_RIDGE_ROWS};

/// Predicted prices never fall below this fraction of the base close.
pub const PRICE_FLOOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("insufficient history: day {t} needs {needed} prior days")]
    Bounds { t: usize, needed: usize },
    #[error("too few training rows for asset {asset} horizon {horizon}: {rows} < {min}")]
    TooFewRows { asset: usize, horizon: usize, rows: usize, min: usize },
    #[error("ill-conditioned normal equations (asset {asset}, horizon {horizon})")]
    Conditioning { asset: usize, horizon: usize },
    #[error("forecast coverage missing for base day {t}, asset {asset}, horizon {horizon}")]
    Coverage { t: usize, asset: String, horizon: usize },
    #[error("model covers horizons 1..={available}, requested {requested}")]
    Horizon { available: usize, requested: usize },
    #[error("degenerate R²: baseline sum of squared errors is zero")]
    DegenerateBaseline,
    #[error("length mismatch or too few points: {0}")]
    Length(String),
    #[error("infeasible target R² {target}: base forecasts already achieve {base}")]
    InfeasibleTarget { target: f64, base: f64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("external forecast file: {0}")]
    External(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = ForecastError> = std::result::Result<T, E>;

/// Any model that produces an H-step movement trajectory.
pub trait Forecaster: Send + Sync {
    /// `movements[h - 1][asset]` for `h = 1..=horizon` from base day `t`.
    fn movements(&self, series: &MarketSeries, t: usize, horizon: usize) -> Result<Vec<Vec<f64>>>;

    fn name(&self) -> String;
}

/// Mean of the `window` realized movements before day `t`:
/// `(1/window) Σ_{j=1..window} Δp_{t-j}`, i.e. the context-mean prediction
/// of `Δp_t`. Requires `t >= window + 1`.
pub fn context_mean_baseline(series: &MarketSeries, t: usize, window: usize) -> Result<Vec<f64>> {
    if window == 0 || t < window + 1 || t > series.len() {
        return Err(ForecastError::Bounds { t, needed: window + 1 });
    }
    Ok((0..series.n_assets())
        .map(|i| (1..=window).map(|j| series.movement(i, t - j)).sum::<f64>() / window as f64)
        .collect())
}

/// Predicts the trailing context mean for every horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextMeanForecaster {
    pub window: usize,
}

impl Forecaster for ContextMeanForecaster {
    fn movements(&self, series: &MarketSeries, t: usize, horizon: usize) -> Result<Vec<Vec<f64>>> {
        let m = context_mean_baseline(series, t + 1, self.window)?;
        Ok(vec![m; horizon])
    }

    fn name(&self) -> String {
        format!("context-mean({})", self.window)
    }
}

/// Realized future movements; zero beyond the end of the series.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerfectForesight;

impl Forecaster for PerfectForesight {
    fn movements(&self, series: &MarketSeries, t: usize, horizon: usize) -> Result<Vec<Vec<f64>>> {
        Ok((1..=horizon)
            .map(|h| {
                (0..series.n_assets())
                    .map(|i| if t + h < series.len() { series.movement(i, t + h) } else { 0.0 })
                    .collect()
            })
            .collect())
    }

    fn name(&self) -> String {
        "perfect-foresight".into()
    }
}

/// Fixed movement for every (asset, horizon); `0` gives a flat path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantForecaster {
    pub movement: f64,
}

impl Forecaster for ConstantForecaster {
    fn movements(&self, series: &MarketSeries, _t: usize, horizon: usize) -> Result<Vec<Vec<f64>>> {
        Ok(vec![vec![self.movement; series.n_assets()]; horizon])
    }

    fn name(&self) -> String {
        format!("constant({})", self.movement)
    }
}

/// H-step predicted price path from base day `t` and its imagined states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTrajectory {
    pub base_t: usize,
    /// Realized closes at `t`.
    pub base_prices: Vec<f64>,
    /// `movements[h - 1][asset]`
    pub movements: Vec<Vec<f64>>,
    /// `prices[h - 1][asset]` = `p̂_{t+h}`
    pub prices: Vec<Vec<f64>>,
    /// Raw imagined features at `t + h`, `h = 1..=H`.
    pub states: Vec<StateFeatures>,
}

impl ForecastTrajectory {
    pub fn horizon(&self) -> usize {
        self.prices.len()
    }

    /// `relatives[h][asset] = p̂_{t+h+1} / p̂_{t+h}` for `h = 0..H`, with
    /// `p̂_t` the realized close.
    pub fn relatives(&self) -> Vec<Vec<f64>> {
        let mut prev = self.base_prices.as_slice();
        let mut out = Vec::with_capacity(self.prices.len());
        for p in &self.prices {
            out.push(p.iter().zip(prev).map(|(a, b)| a / b).collect());
            prev = p;
        }
        out
    }

    /// Normalized flat imagined states for `h = 1..=H`.
    pub fn normalized_states(&self, norm: &Normalizer) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| norm.apply(s).flatten()).collect()
    }
}

/// Builds the trajectory: composes predicted movements into prices and
/// splices them onto realized closes to derive imagined features.
pub fn forecast(forecaster: &dyn Forecaster, series: &MarketSeries, t: usize, horizon: usize) -> Result<ForecastTrajectory> {
    if t + 1 < WARMUP || t >= series.len() {
        return Err(ForecastError::Bounds { t, needed: WARMUP - 1 });
    }
    if horizon == 0 {
        return Err(ForecastError::Config("horizon must be >= 1".into()));
    }
    let movements = forecaster.movements(series, t, horizon)?;
    if movements.len() != horizon || movements.iter().any(|m| m.len() != series.n_assets()) {
        return Err(ForecastError::Length(format!(
            "{} returned {} horizons for {horizon}",
            forecaster.name(),
            movements.len()
        )));
    }
    trajectory_from_movements(series, t, movements)
}

pub fn trajectory_from_movements(series: &MarketSeries, t: usize, movements: Vec<Vec<f64>>) -> Result<ForecastTrajectory> {
    let n = series.n_assets();
    let horizon = movements.len();
    let base_prices: Vec<f64> = (0..n).map(|i| series.close(i, t)).collect();
    let mut prices = Vec::with_capacity(horizon);
    let mut prev = base_prices.clone();
    for m in &movements {
        let p: Vec<f64> = prev
            .iter()
            .zip(m)
            .zip(&base_prices)
            .map(|((p, d), b)| (p + d).max(PRICE_FLOOR * b))
            .collect();
        prices.push(p.clone());
        prev = p;
    }

    // closes[asset] = realized closes t-WARMUP+1..=t followed by the path
    let history = WARMUP - 1;
    let mut states = Vec::with_capacity(horizon);
    let mut closes: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut c: Vec<f64> = (t + 1 - history.min(t + 1)..=t).map(|s| series.close(i, s)).collect();
            c.reserve(horizon);
            c
        })
        .collect();
    for (h, p) in prices.iter().enumerate() {
        let values = (0..n)
            .map(|i| {
                closes[i].push(p[i]);
                let c = &closes[i];
                feature_row(p[i], p[i], p[i], p[i], &c[c.len() - WARMUP..])
            })
            .collect();
        states.push(StateFeatures { t: t + h + 1, values });
    }
    Ok(ForecastTrajectory {
        base_t: t,
        base_prices,
        movements,
        prices,
        states,
    })
}

/// Per-horizon variance of normalized imagined features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibration {
    /// `variance[h - 1]` = σ̂²_{t+h}
    pub variance: Vec<f64>,
}

impl NoiseCalibration {
    pub fn zeros(horizon: usize) -> Self {
        Self {
            variance: vec![0.0; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.variance.len()
    }
}

/// Estimates σ̂²_h over base days `bases` (the training split): for each
/// horizon, the pooled variance of normalized imagined feature values, pooled
/// across (asset, feature) groups with each group's variance taken over
/// forecast dates.
pub fn noise_stats(
    forecaster: &dyn Forecaster,
    series: &MarketSeries,
    norm: &Normalizer,
    bases: std::ops::Range<usize>,
    horizon: usize,
) -> Result<NoiseCalibration> {
    let n = series.n_assets();
    let width = n * crate::marketdata::FEATURE_COUNT;
    // sums[h][k], sq[h][k] over dates
    let mut sums = vec![vec![0.0; width]; horizon];
    let mut sq = vec![vec![0.0; width]; horizon];
    let mut count = 0usize;
    let mut first: Option<Vec<Vec<f64>>> = None;
    for t in bases.start.max(WARMUP)..bases.end {
        let traj = forecast(forecaster, series, t, horizon)?;
        let states = traj.normalized_states(norm);
        // shift by the first sample for numerical stability
        let shift = first.get_or_insert_with(|| states.clone());
        for h in 0..horizon {
            for k in 0..width {
                let d = states[h][k] - shift[h][k];
                sums[h][k] += d;
                sq[h][k] += d * d;
            }
        }
        count += 1;
    }
    if count < 2 {
        return Err(ForecastError::Length(format!("{count} calibration dates, need at least 2")));
    }
    let c = count as f64;
    let variance = (0..horizon)
        .map(|h| {
            let pooled: f64 = (0..width).map(|k| (sq[h][k] - sums[h][k] * sums[h][k] / c).max(0.0)).sum();
            pooled / (width as f64 * (c - 1.0))
        })
        .collect();
    Ok(NoiseCalibration { variance })
}

/// `K` perturbed copies of the normalized imagined states (`h = 1..=H`),
/// `s̃ = ŝ + ε`, `ε ~ N(0, σ² σ̂²_h)` elementwise.
pub fn perturb(
    states: &[Vec<f64>],
    calib: &NoiseCalibration,
    sigma: f64,
    particles: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if particles < 1 {
        return Err(ForecastError::Config("particle count K must be >= 1".into()));
    }
    if calib.horizon() < states.len() {
        return Err(ForecastError::Horizon {
            available: calib.horizon(),
            requested: states.len(),
        });
    }
    if !(sigma >= 0.0) {
        return Err(ForecastError::Config(format!("noise scale {sigma} must be >= 0")));
    }
    Ok((0..particles)
        .map(|_| {
            states
                .iter()
                .enumerate()
                .map(|(h, s)| {
                    let sd = sigma * calib.variance[h].sqrt();
                    if sd == 0.0 {
                        return s.clone();
                    }
                    s.iter()
                        .map(|x| {
                            let z: f64 = rng.sample(StandardNormal);
                            x + sd * z
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}
