//! Closed-form ridge regression over the 11 raw features of one asset, one
//! model per (asset, horizon).
//!
//! The target for horizon `h` at base day `t` is the relative movement
//! `Δp_{t+h} / p_t`; predictions are scaled back by `p_t`. Columns are
//! centered and scaled to unit variance before solving
//! `(XᵀX + λI) β = Xᵀy`; the intercept is not penalized.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ForecastError, Forecaster, Result};
use crate::marketdata::{compute_features, MarketSeries, FEATURE_COUNT, WARMUP};

pub const MIN_RIDGE_ROWS: usize = 50;

/// Smallest acceptable `min(diag L)² / max(diag L)²` of the Cholesky factor.
const CONDITION_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    /// Coefficients in raw feature units.
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeModel {
    /// Fits on rows `x` (all the same width) and targets `y`; `None` when
    /// the system is too ill-conditioned to solve.
    pub fn fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Option<Self> {
        let n = x.len();
        let d = x.first().map(|r| r.len()).unwrap_or(0);
        if n == 0 || n != y.len() || lambda < 0.0 {
            return None;
        }
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let v = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let xs = DMatrix::from_fn(n, d, |i, j| (x[i][j] - mean[j]) / scale[j]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let mut gram = xs.transpose() * &xs;
        for j in 0..d {
            gram[(j, j)] += lambda;
        }
        let rhs = xs.transpose() * yc;
        let chol = gram.cholesky()?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
        if !(hi > 0.0) || (lo / hi).powi(2) < CONDITION_FLOOR {
            return None;
        }
        let beta = chol.solve(&rhs);
        let coef: Vec<f64> = (0..d).map(|j| beta[j] / scale[j]).collect();
        let intercept = y_mean - coef.iter().zip(&mean).map(|(c, m)| c * m).sum::<f64>();
        Some(Self { coef, intercept, lambda })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// Training rows for one (asset, horizon): base days whose target day also
/// lies inside `range`.
fn design(series: &MarketSeries, range: &Range<usize>, asset: usize, horizon: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let start = range.start.max(WARMUP);
    let end = range.end.min(series.len()).saturating_sub(horizon);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for t in start..end {
        let f = compute_features(series, t)?;
        x.push(f.values[asset].to_vec());
        y.push(series.movement(asset, t + horizon) / series.close(asset, t));
    }
    Ok((x, y))
}

/// Fits the model for one asset and horizon on days `range` (the training
/// split).
pub fn fit_ridge(series: &MarketSeries, range: Range<usize>, horizon: usize, asset: usize, lambda: f64) -> Result<RidgeModel> {
    if horizon == 0 {
        return Err(ForecastError::Config("horizon must be >= 1".into()));
    }
    if !(lambda >= 0.0) {
        return Err(ForecastError::Config(format!("ridge lambda {lambda} must be >= 0")));
    }
    let (x, y) = design(series, &range, asset, horizon)?;
    if x.len() < MIN_RIDGE_ROWS {
        return Err(ForecastError::TooFewRows {
            asset,
            horizon,
            rows: x.len(),
            min: MIN_RIDGE_ROWS,
        });
    }
    RidgeModel::fit(&x, &y, lambda).ok_or(ForecastError::Conditioning { asset, horizon })
}

/// One ridge model per (asset, horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeForecaster {
    /// `models[asset][h - 1]`
    pub models: Vec<Vec<RidgeModel>>,
    pub lambda: f64,
}

impl RidgeForecaster {
    pub fn fit(series: &MarketSeries, range: Range<usize>, horizon: usize, lambda: f64) -> Result<Self> {
        let models = (0..series.n_assets())
            .map(|i| (1..=horizon).map(|h| fit_ridge(series, range.clone(), h, i, lambda)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        Ok(Self { models, lambda })
    }

    pub fn horizon(&self) -> usize {
        self.models.first().map(|m| m.len()).unwrap_or(0)
    }
}

impl Forecaster for RidgeForecaster {
    fn movements(&self, series: &MarketSeries, t: usize, horizon: usize) -> Result<Vec<Vec<f64>>> {
        if horizon > self.horizon() {
            return Err(ForecastError::Horizon {
                available: self.horizon(),
                requested: horizon,
            });
        }
        let f = compute_features(series, t)?;
        Ok((0..horizon)
            .map(|h| {
                (0..series.n_assets())
                    .map(|i| self.models[i][h].predict(&f.values[i]) * series.close(i, t))
                    .collect()
            })
            .collect())
    }

    fn name(&self) -> String {
        format!("ridge(lambda={})", self.lambda)
    }
}

const _: () = assert!(FEATURE_COUNT == 11);

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn recovers_linear_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_rows(&mut rng, 200, 11);
        let truth: Vec<f64> = (0..11).map(|j| (j as f64 - 5.0) * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.7 + r.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>()).collect();
        let m = RidgeModel::fit(&x, &y, 1e-12).unwrap();
        for (a, b) in m.coef.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((m.intercept - 0.7).abs() < 1e-6);
    }

    #[test]
    fn huge_lambda_shrinks_to_intercept() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_rows(&mut rng, 100, 3);
        let y: Vec<f64> = x.iter().map(|r| 2.0 + r[0]).collect();
        let m = RidgeModel::fit(&x, &y, 1e12).unwrap();
        assert!(m.coef.iter().all(|c| c.abs() < 1e-8));
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((m.predict(&x[7]) - y_mean).abs() < 1e-6);
    }

    #[test]
    fn singular_without_regularization_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = random_rows(&mut rng, 80, 3);
        for r in &mut x {
            r[2] = 2.0 * r[0] - r[1];
        }
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        assert!(RidgeModel::fit(&x, &y, 0.0).is_none());
        assert!(RidgeModel::fit(&x, &y, 1.0).is_some());
    }

    #[test]
    fn pure_noise_target_has_no_out_of_sample_skill() {
        let mut total = 0.0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = random_rows(&mut rng, 300, 11);
            let y: Vec<f64> = (0..300).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let m = RidgeModel::fit(&x[..200], &y[..200], 1.0).unwrap();
            let y_train_mean = y[..200].iter().sum::<f64>() / 200.0;
            let sse: f64 = (200..300).map(|i| (y[i] - m.predict(&x[i])).powi(2)).sum();
            let sst: f64 = (200..300).map(|i| (y[i] - y_train_mean).powi(2)).sum();
            let r2 = 1.0 - sse / sst;
            assert!(r2 <= 0.02 + 0.1, "seed {seed}: {r2}");
            total += r2;
        }
        assert!(total / 20.0 <= 0.02);
    }
}
