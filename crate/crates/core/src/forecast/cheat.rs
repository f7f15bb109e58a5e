//! Synthetic forecasts of controlled quality: a convex blend of a base
//! forecaster and the realized movements.
//!
//! With `blend = (1 - c) base + c realized` the blend error is
//! `(1 - c)` times the base error pointwise, so
//! `R²(c) = 1 - (1 - c)² (1 - r₀)` and `c = 1 - sqrt((1 - target) / (1 - r₀))`.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{context_mean_baseline, ForecastError, Forecaster, Result};
use crate::marketdata::MarketSeries;

/// `1 - SSE(predictions) / SSE(baseline)`, pooled over all points.
pub fn r_squared(predictions: &[f64], realized: &[f64], baseline: &[f64]) -> Result<f64> {
    let n = realized.len();
    if predictions.len() != n || baseline.len() != n {
        return Err(ForecastError::Length(format!(
            "predictions {}, realized {n}, baseline {}",
            predictions.len(),
            baseline.len()
        )));
    }
    if n < 2 {
        return Err(ForecastError::Length(format!("{n} points, need at least 2")));
    }
    let sse = |p: &[f64]| p.iter().zip(realized).map(|(a, b)| (b - a) * (b - a)).sum::<f64>();
    let base = sse(baseline);
    if !(base > 0.0) {
        return Err(ForecastError::DegenerateBaseline);
    }
    Ok(1.0 - sse(predictions) / base)
}

pub fn blend(base: &[f64], realized: &[f64], c: f64) -> Vec<f64> {
    if c == 1.0 {
        return realized.to_vec();
    }
    base.iter().zip(realized).map(|(b, r)| (1.0 - c) * b + c * r).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheatCalibration {
    pub target: f64,
    /// Base forecaster R² on the calibration set.
    pub base_r2: f64,
    pub c: f64,
    /// R² of the blend on the calibration set.
    pub achieved: f64,
}

/// Targets this far below the base R² are treated as equal to it (`c = 0`),
/// absorbing roundoff in how the base score was obtained.
pub const TARGET_SLACK: f64 = 1e-12;

/// Solves for `c` so the blend scores `target` against `baseline`.
pub fn calibrate_cheat(
    base: &[f64],
    realized: &[f64],
    baseline: &[f64],
    target: f64,
) -> Result<(CheatCalibration, Vec<f64>)> {
    if !(target <= 1.0) {
        return Err(ForecastError::Config(format!("target R² {target} must be <= 1")));
    }
    let r0 = r_squared(base, realized, baseline)?;
    if target < r0 - TARGET_SLACK {
        return Err(ForecastError::InfeasibleTarget { target, base: r0 });
    }
    let c = if target == 1.0 {
        1.0
    } else if target <= r0 {
        0.0
    } else {
        1.0 - ((1.0 - target) / (1.0 - r0)).sqrt()
    };
    let blended = blend(base, realized, c);
    let achieved = r_squared(&blended, realized, baseline)?;
    Ok((
        CheatCalibration {
            target,
            base_r2: r0,
            c,
            achieved,
        },
        blended,
    ))
}

/// Flattened (base day, horizon, asset) cells with base predictions, realized
/// movements and context-mean baseline predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    /// `(t, h, asset)` per cell.
    pub cells: Vec<(usize, usize, usize)>,
    pub base: Vec<f64>,
    pub realized: Vec<f64>,
    pub baseline: Vec<f64>,
}

/// Collects cells for base days `bases` and horizons `1..=horizon` whose
/// target day `t + h` exists. The baseline for every horizon is the
/// trailing `window`-day mean of movements up to `t`.
pub fn calibration_set(
    forecaster: &dyn Forecaster,
    series: &MarketSeries,
    bases: Range<usize>,
    horizon: usize,
    window: usize,
) -> Result<CalibrationSet> {
    let mut set = CalibrationSet {
        cells: Vec::new(),
        base: Vec::new(),
        realized: Vec::new(),
        baseline: Vec::new(),
    };
    for t in bases {
        let last = horizon.min(series.len().saturating_sub(t + 1));
        if last == 0 {
            continue;
        }
        let pred = forecaster.movements(series, t, last)?;
        let mean = context_mean_baseline(series, t + 1, window)?;
        for h in 1..=last {
            for i in 0..series.n_assets() {
                set.cells.push((t, h, i));
                set.base.push(pred[h - 1][i]);
                set.realized.push(series.movement(i, t + h));
                set.baseline.push(mean[i]);
            }
        }
    }
    Ok(set)
}

impl CalibrationSet {
    pub fn r_squared(&self, predictions: &[f64]) -> Result<f64> {
        r_squared(predictions, &self.realized, &self.baseline)
    }

    pub fn calibrate(&self, target: f64) -> Result<(CheatCalibration, Vec<f64>)> {
        calibrate_cheat(&self.base, &self.realized, &self.baseline, target)
    }
}

/// Blends a base forecaster with realized movements at coefficient `c`.
/// Reads future bars by design. Horizons past the end of the series fall
/// back to the base prediction.
#[derive(Clone)]
pub struct CheatForecaster {
    pub base: Arc<dyn Forecaster>,
    pub c: f64,
}

impl std::fmt::Debug for CheatForecaster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CheatForecaster")
            .field("base", &self.base.name())
            .field("c", &self.c)
            .finish()
    }
}

impl CheatForecaster {
    pub fn new(base: Arc<dyn Forecaster>, c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(ForecastError::Config(format!("blend coefficient {c} outside [0, 1]")));
        }
        Ok(Self { base, c })
    }
}

impl Forecaster for CheatForecaster {
    fn movements(&self, series: &MarketSeries, t: usize, horizon: usize) -> Result<Vec<Vec<f64>>> {
        let mut m = self.base.movements(series, t, horizon)?;
        for (k, row) in m.iter_mut().enumerate() {
            let day = t + k + 1;
            if day >= series.len() {
                continue;
            }
            let realized: Vec<f64> = (0..series.n_assets()).map(|i| series.movement(i, day)).collect();
            *row = blend(row, &realized, self.c);
        }
        Ok(m)
    }

    fn name(&self) -> String {
        format!("cheat(c={:.6}, base={})", self.c, self.base.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::ContextMeanForecaster;
    use crate::marketdata::{Bar, MarketSeries};
    use chrono::NaiveDate;

    #[test]
    fn r_squared_fixtures() {
        let realized = [1.0, -2.0, 3.0, 0.5];
        let baseline = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(r_squared(&realized, &realized, &baseline).unwrap(), 1.0);
        assert_eq!(r_squared(&baseline, &realized, &baseline).unwrap(), 0.0);
        let half: Vec<f64> = realized.iter().zip(&baseline).map(|(r, b)| r - 0.5 * (r - b)).collect();
        assert!((r_squared(&half, &realized, &baseline).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn r_squared_errors() {
        assert!(matches!(
            r_squared(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]),
            Err(ForecastError::DegenerateBaseline)
        ));
        assert!(matches!(r_squared(&[1.0], &[1.0], &[0.0]), Err(ForecastError::Length(_))));
        assert!(matches!(r_squared(&[1.0, 2.0], &[1.0], &[0.0]), Err(ForecastError::Length(_))));
    }

    #[test]
    fn calibration_endpoints() {
        let realized = [1.0, -1.0, 2.0, 0.0];
        let baseline = [0.0; 4];
        let base = [0.5, 0.0, 0.0, 1.0];
        let r0 = r_squared(&base, &realized, &baseline).unwrap();
        let (cal, out) = calibrate_cheat(&base, &realized, &baseline, r0).unwrap();
        assert_eq!(cal.c, 0.0);
        assert_eq!(out, base.to_vec());
        let (cal, out) = calibrate_cheat(&base, &realized, &baseline, 1.0).unwrap();
        assert_eq!(cal.c, 1.0);
        assert_eq!(out, realized.to_vec());
        assert!(matches!(
            calibrate_cheat(&base, &realized, &baseline, r0 - 0.1),
            Err(ForecastError::InfeasibleTarget { .. })
        ));
        let (cal, _) = calibrate_cheat(&base, &realized, &baseline, r0 - 1e-14).unwrap();
        assert_eq!(cal.c, 0.0);
    }

    #[test]
    fn half_blend_from_zero_skill() {
        let realized = [1.0, -1.0, 2.0, 0.5, -0.3];
        let baseline = [0.2, 0.2, 0.2, 0.2, 0.2];
        let (cal, out) = calibrate_cheat(&baseline, &realized, &baseline, 0.75).unwrap();
        assert!((cal.c - 0.5).abs() < 1e-15);
        assert!((r_squared(&out, &realized, &baseline).unwrap() - 0.75).abs() < 1e-9);
    }

    #[test]
    fn cheat_forecaster_matches_calibration_set_blend() {
        let closes: Vec<f64> = (0..80).map(|k| 50.0 + (k as f64 * 0.7).sin() * 3.0 + k as f64 * 0.1).collect();
        let d0 = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let bars = vec![closes
            .iter()
            .enumerate()
            .map(|(k, c)| Bar::flat(d0 + chrono::Days::new(k as u64), *c))
            .collect()];
        let s = MarketSeries::new(vec!["A".into()], bars, None).unwrap();
        let base: Arc<dyn Forecaster> = Arc::new(ContextMeanForecaster { window: 30 });
        let set = calibration_set(base.as_ref(), &s, 40..70, 3, 30).unwrap();
        let (cal, blended) = set.calibrate(0.6).unwrap();
        assert!((cal.achieved - 0.6).abs() < 1e-9);
        let f = CheatForecaster::new(base, cal.c).unwrap();
        let mut k = 0;
        for t in 40..70 {
            let m = f.movements(&s, t, 3).unwrap();
            for h in 1..=3 {
                assert_eq!(set.cells[k], (t, h, 0));
                assert_eq!(m[h - 1][0], blended[k]);
                k += 1;
            }
        }
    }
}
