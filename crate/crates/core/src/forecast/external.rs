//! Forecasts produced outside this crate, read from CSV with columns
//! `base_date,asset,horizon,predicted_movement`.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{ForecastError, Forecaster, Result};
use crate::marketdata::MarketSeries;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    base_date: NaiveDate,
    asset: String,
    horizon: usize,
    predicted_movement: f64,
}

/// Movements keyed by (base date, asset name, horizon).
#[derive(Debug, Clone, Default)]
pub struct ExternalForecaster {
    table: HashMap<(NaiveDate, String), Vec<Option<f64>>>,
    source: String,
}

impl ExternalForecaster {
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| ForecastError::External(format!("{}: {e}", path.display())))?;
        let mut f = Self {
            table: HashMap::new(),
            source: path.display().to_string(),
        };
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| ForecastError::External(format!("{} row {}: {e}", path.display(), i + 2)))?;
            if row.horizon == 0 || !row.predicted_movement.is_finite() {
                return Err(ForecastError::External(format!(
                    "{} row {}: horizon must be >= 1 and movement finite",
                    path.display(),
                    i + 2
                )));
            }
            f.insert(row.base_date, &row.asset, row.horizon, row.predicted_movement);
        }
        Ok(f)
    }

    pub fn insert(&mut self, base_date: NaiveDate, asset: &str, horizon: usize, movement: f64) {
        let cells = self.table.entry((base_date, asset.to_string())).or_default();
        if cells.len() < horizon {
            cells.resize(horizon, None);
        }
        cells[horizon - 1] = Some(movement);
    }

    /// Checks that every base day in `bases` has all assets and horizons.
    pub fn check_coverage(&self, series: &MarketSeries, bases: std::ops::Range<usize>, horizon: usize) -> Result<()> {
        for t in bases {
            self.movements(series, t, horizon)?;
        }
        Ok(())
    }
}

impl Forecaster for ExternalForecaster {
    fn movements(&self, series: &MarketSeries, t: usize, horizon: usize) -> Result<Vec<Vec<f64>>> {
        let date = series.dates()[t];
        let mut out = vec![vec![0.0; series.n_assets()]; horizon];
        for (i, asset) in series.assets().iter().enumerate() {
            let cells = self.table.get(&(date, asset.clone()));
            for h in 1..=horizon {
                let v = cells.and_then(|c| c.get(h - 1).copied().flatten());
                out[h - 1][i] = v.ok_or_else(|| ForecastError::Coverage {
                    t,
                    asset: asset.clone(),
                    horizon: h,
                })?;
            }
        }
        Ok(out)
    }

    fn name(&self) -> String {
        format!("external({})", self.source)
    }
}

/// Writes `forecaster`'s movements for base days `bases` and horizons
/// `1..=horizon` in the format [`ExternalForecaster::load`] reads.
pub fn write_forecast_csv(
    forecaster: &dyn Forecaster,
    series: &MarketSeries,
    bases: std::ops::Range<usize>,
    horizon: usize,
    out: impl std::io::Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| ForecastError::External(e.to_string());
    for t in bases {
        let m = forecaster.movements(series, t, horizon)?;
        for (i, asset) in series.assets().iter().enumerate() {
            for h in 1..=horizon {
                w.serialize(Row {
                    base_date: series.dates()[t],
                    asset: asset.clone(),
                    horizon: h,
                    predicted_movement: m[h - 1][i],
                })
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| ForecastError::External(e.to_string()))
}
