//! Seeded random-walk markets with an optional persistent drift component
//! that a forecaster can pick up from trailing prices.
//!
//! Daily log return of asset `i`:
//! `r_t = ln(1 + drift_i) + a_{i,t} + vol_i ε_t`, with
//! `a_t = φ a_{t-1} + sqrt(1 - φ²) · signal · vol_i · η_t` (stationary std
//! `signal · vol_i`). Open gaps, intraday ranges and a steady dividend
//! adjustment are layered on top so all OHLC features carry information.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use planfolio_core::marketdata::{Bar, MarketSeries, SplitBounds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticMarketSpec {
    pub assets: usize,
    pub length: usize,
    /// Mean simple daily return per asset; a single entry applies to all.
    pub drift: Vec<f64>,
    /// Daily log-return volatility per asset; a single entry applies to all.
    pub vol: Vec<f64>,
    /// Stationary std of the persistent drift, in units of `vol`.
    pub signal: f64,
    /// AR(1) coefficient of the persistent drift.
    pub persistence: f64,
    pub start_price: f64,
    pub dividend_yield: f64,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SyntheticMarketSpec {
    fn default() -> Self {
        Self {
            assets: 5,
            length: 750,
            drift: vec![0.0003],
            vol: vec![0.015],
            signal: 0.0,
            persistence: 0.95,
            start_price: 100.0,
            dividend_yield: 0.02,
            start_date: NaiveDate::from_ymd_opt(2015, 1, 2).expect("valid date"),
            seed: 0,
        }
    }
}

fn per_asset(values: &[f64], n: usize, what: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        k if k == n => Ok(values.to_vec()),
        k => Err(HarnessError::Config(format!("{what} has {k} entries for {n} assets"))),
    }
}

/// Business days (Mon-Fri) from `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

impl SyntheticMarketSpec {
    pub fn validate(&self) -> Result<()> {
        if self.assets == 0 {
            return Err(HarnessError::Config("synthetic market needs at least one asset".into()));
        }
        if self.length < 100 {
            return Err(HarnessError::Config(format!("synthetic length {} must be >= 100", self.length)));
        }
        let vol = per_asset(&self.vol, self.assets, "vol")?;
        let drift = per_asset(&self.drift, self.assets, "drift")?;
        if vol.iter().any(|v| !(*v >= 0.0)) {
            return Err(HarnessError::Config("volatility must be >= 0".into()));
        }
        if drift.iter().any(|d| !(*d > -1.0)) {
            return Err(HarnessError::Config("drift must be > -1".into()));
        }
        if !(self.signal >= 0.0) || !(-1.0..1.0).contains(&self.persistence) {
            return Err(HarnessError::Config("signal must be >= 0 and persistence in (-1, 1)".into()));
        }
        if !(self.start_price > 0.0) {
            return Err(HarnessError::Config("start_price must be > 0".into()));
        }
        Ok(())
    }
}

/// Generates the market; the same spec always yields the same bars.
pub fn generate_synthetic(spec: &SyntheticMarketSpec, splits: (f64, f64)) -> Result<MarketSeries> {
    spec.validate()?;
    let n = spec.assets;
    let vol = per_asset(&spec.vol, n, "vol")?;
    let drift = per_asset(&spec.drift, n, "drift")?;
    let dates = business_days(spec.start_date, spec.length);
    let phi = spec.persistence;
    let innov = (1.0 - phi * phi).sqrt();
    let mut bars = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(planfolio_core::seed::mix(spec.seed, &[planfolio_core::seed::MARKET_STREAM, i as u64]));
        let mu = (1.0 + drift[i]).ln();
        let sd = vol[i];
        let mut a = spec.signal * sd * rng.sample::<f64, _>(StandardNormal);
        let mut close = spec.start_price;
        let mut series = Vec::with_capacity(spec.length);
        for (t, date) in dates.iter().enumerate() {
            let (e, g, u, l): (f64, f64, f64, f64) = (
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let prev = close;
            if t > 0 {
                a = phi * a + innov * spec.signal * sd * rng.sample::<f64, _>(StandardNormal);
                close = prev * (mu + a + sd * e).exp();
            }
            let open = prev * (0.25 * sd * g).exp();
            let high = open.max(close) * (0.5 * sd * u.abs()).exp();
            let low = open.min(close) * (-0.5 * sd * l.abs()).exp();
            let years_left = (spec.length - 1 - t) as f64 / 252.0;
            series.push(Bar {
                date: *date,
                open,
                high,
                low,
                close,
                adj_close: close * (-spec.dividend_yield * years_left).exp(),
            });
        }
        bars.push(series);
    }
    let names = (0..n).map(|i| format!("SYN{i}")).collect();
    let bounds = SplitBounds::by_fraction(spec.length, splits.0, splits.1)?;
    Ok(MarketSeries::new(names, bars, Some(bounds))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_market_without_drift_or_vol() {
        let spec = SyntheticMarketSpec {
            assets: 2,
            length: 120,
            drift: vec![0.0],
            vol: vec![0.0],
            dividend_yield: 0.0,
            ..Default::default()
        };
        let s = generate_synthetic(&spec, (0.6, 0.2)).unwrap();
        for i in 0..2 {
            assert!(s.bars(i).iter().all(|b| b.close == 100.0 && b.open == 100.0 && b.high == 100.0));
        }
    }

    #[test]
    fn pure_drift_is_exponential() {
        let spec = SyntheticMarketSpec {
            assets: 1,
            length: 150,
            drift: vec![0.02],
            vol: vec![0.0],
            ..Default::default()
        };
        let s = generate_synthetic(&spec, (0.6, 0.2)).unwrap();
        for t in 0..150 {
            let want = 100.0 * 1.02f64.powi(t as i32);
            assert!((s.close(0, t) - want).abs() < 1e-9 * want);
        }
    }

    #[test]
    fn seeded_and_weekday_only() {
        let spec = SyntheticMarketSpec {
            signal: 0.5,
            ..Default::default()
        };
        let a = generate_synthetic(&spec, (0.6, 0.1)).unwrap();
        let b = generate_synthetic(&spec, (0.6, 0.1)).unwrap();
        assert_eq!(a, b);
        assert!(a.dates().iter().all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
        let c = generate_synthetic(&SyntheticMarketSpec { seed: 1, ..spec }, (0.6, 0.1)).unwrap();
        assert_ne!(a.close(0, 10), c.close(0, 10));
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = [
            SyntheticMarketSpec { length: 99, ..Default::default() },
            SyntheticMarketSpec { vol: vec![-0.1], ..Default::default() },
            SyntheticMarketSpec { drift: vec![0.0, 0.1], ..Default::default() },
        ];
        for spec in bad {
            assert!(generate_synthetic(&spec, (0.6, 0.1)).is_err());
        }
    }
}
