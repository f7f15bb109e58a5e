#![allow(dead_code)]

use chrono::{Days, NaiveDate};
use planfolio_core::marketdata::{fit_normalizer, Bar, MarketSeries, Normalizer, Split, SplitBounds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random-walk OHLC bars. `drift[i]` is the mean daily log return of asset i.
pub fn random_series(drift: &[f64], vol: f64, len: usize, seed: u64) -> MarketSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let bars = drift
        .iter()
        .map(|mu| {
            let mut close = 50.0 + 50.0 * rng.random::<f64>();
            (0..len)
                .map(|t| {
                    let open = close * (1.0 + 0.002 * rng.sample::<f64, _>(StandardNormal));
                    let z: f64 = rng.sample(StandardNormal);
                    close *= (mu + vol * z).exp();
                    let high = open.max(close) * (1.0 + 0.003 * rng.random::<f64>());
                    let low = open.min(close) * (1.0 - 0.003 * rng.random::<f64>());
                    let adj = close * (-0.02 * (len - 1 - t) as f64 / 252.0).exp();
                    Bar {
                        date: d0 + Days::new(t as u64),
                        open,
                        high,
                        low,
                        close,
                        adj_close: adj,
                    }
                })
                .collect()
        })
        .collect();
    let names = (0..drift.len()).map(|i| format!("A{i}")).collect();
    let splits = SplitBounds::by_fraction(len, 0.6, 0.1).unwrap();
    MarketSeries::new(names, bars, Some(splits)).unwrap()
}

pub fn train_normalizer(series: &MarketSeries) -> Normalizer {
    fit_normalizer(series, Split::Train).unwrap()
}

/// Deterministic closes; bars are flat apart from a varying adjustment
/// factor so no feature column is constant.
pub fn from_closes(closes: &[Vec<f64>]) -> MarketSeries {
    let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let len = closes[0].len();
    let bars = closes
        .iter()
        .map(|c| {
            c.iter()
                .enumerate()
                .map(|(t, &p)| {
                    let mut b = Bar::flat(d0 + Days::new(t as u64), p);
                    b.open = p * (1.0 + 0.0005 * ((t % 4) as f64 - 1.5));
                    b.high = p * (1.0 + 0.001 * (1 + t % 3) as f64);
                    b.low = p * (1.0 - 0.001 * (1 + t % 5) as f64);
                    b.adj_close = p * (-0.02 * (len - 1 - t) as f64 / 252.0).exp();
                    b
                })
                .collect()
        })
        .collect();
    let names = (0..closes.len()).map(|i| format!("A{i}")).collect();
    let splits = SplitBounds::by_fraction(len, 0.6, 0.1).unwrap();
    MarketSeries::new(names, bars, Some(splits)).unwrap()
}
