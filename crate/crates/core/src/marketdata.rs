//! Daily OHLC ingestion, the 11 per-asset temporal features and z-score
//! normalization.
//!
//! Feature order per asset (fixed):
//!
//! | idx | name      | definition                                   |
//! |-----|-----------|----------------------------------------------|
//! | 0   | `z_open`  | `open_t / close_t - 1`                       |
//! | 1   | `z_high`  | `high_t / close_t - 1`                       |
//! | 2   | `z_low`   | `low_t / close_t - 1`                        |
//! | 3   | `z_adj`   | `adj_close_t / close_t - 1`                  |
//! | 4   | `z_close` | `close_t / close_{t-1} - 1`                  |
//! | 5.. | `z_d_k`   | `mean(close_{t-k+1..=t}) / close_t - 1`, k ∈ {5,10,15,20,25,30} |

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FEATURE_COUNT: usize = 11;
pub const MA_WINDOWS: [usize; 6] = [5, 10, 15, 20, 25, 30];
/// Days of history required before the first feature row.
pub const WARMUP: usize = 30;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "z_open", "z_high", "z_low", "z_adj", "z_close", "z_d_5", "z_d_10", "z_d_15", "z_d_20",
    "z_d_25", "z_d_30",
];

/// Index of the first close-derived feature (`z_close`).
pub const FIRST_CLOSE_FEATURE: usize = 4;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} at row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("validation error in {path} at row {row}: {message}")]
    Validation {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("date alignment error: assets {assets:?} do not share the common date index")]
    Alignment { assets: Vec<String> },
    #[error("no data found in {0}")]
    Empty(PathBuf),
    #[error("split error: {0}")]
    Split(String),
    #[error("insufficient history: day {t} needs at least {needed} (series length {len})")]
    Bounds { t: usize, needed: usize, len: usize },
    #[error("degenerate feature: asset {asset} feature {feature} has zero variance on the split")]
    DegenerateFeature { asset: String, feature: &'static str },
    #[error("split has {rows} usable feature rows, need at least 2")]
    TooFewRows { rows: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
}

impl Bar {
    /// A bar with every price equal to `price`.
    pub fn flat(date: NaiveDate, price: f64) -> Self {
        Self {
            date,
            open: price,
            high: price,
            low: price,
            close: price,
            adj_close: price,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close, self.adj_close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(format!("non-positive or non-finite price on {}", self.date));
        }
        let lo = self.open.min(self.close);
        let hi = self.open.max(self.close);
        if self.low > lo || hi > self.high {
            return Err(format!(
                "inconsistent bar on {}: low {} / high {} do not bracket open {} and close {}",
                self.date, self.low, self.high, self.open, self.close
            ));
        }
        Ok(())
    }
}

/// Train / validation / test day-index ranges. Contiguous, ordered and
/// covering the whole index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub train: Range<usize>,
    pub valid: Range<usize>,
    pub test: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl SplitBounds {
    pub fn new(train: Range<usize>, valid: Range<usize>, test: Range<usize>, len: usize) -> Result<Self> {
        if train.start != 0 || train.end != valid.start || valid.end != test.start || test.end != len {
            return Err(DataError::Split(format!(
                "splits {train:?}/{valid:?}/{test:?} must be contiguous and cover 0..{len}"
            )));
        }
        if train.is_empty() || valid.is_empty() || test.is_empty() {
            return Err(DataError::Split("every split must be non-empty".into()));
        }
        Ok(Self { train, valid, test })
    }

    /// Splits a length-`len` index by fractions of the whole.
    pub fn by_fraction(len: usize, train: f64, valid: f64) -> Result<Self> {
        let a = ((len as f64) * train).round() as usize;
        let b = ((len as f64) * (train + valid)).round() as usize;
        Self::new(0..a, a..b, b..len, len)
    }

    /// Degenerate bounds for series too short to split (everything is train).
    fn whole(len: usize) -> Self {
        Self {
            train: 0..len,
            valid: len..len,
            test: len..len,
        }
    }

    pub fn range(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Valid => self.valid.clone(),
            Split::Test => self.test.clone(),
        }
    }

    /// The split's days that have full feature history (warm-up dropped).
    pub fn usable(&self, split: Split) -> Range<usize> {
        let r = self.range(split);
        r.start.max(WARMUP)..r.end.max(WARMUP)
    }
}

/// Split boundaries given as dates: the validation split starts on
/// `valid_start` and the test split on `test_start` (first index with
/// date >= the boundary).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDates {
    pub valid_start: NaiveDate,
    pub test_start: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSeries {
    assets: Vec<String>,
    dates: Vec<NaiveDate>,
    /// `bars[asset][day]`
    bars: Vec<Vec<Bar>>,
    splits: SplitBounds,
}

impl MarketSeries {
    pub fn new(assets: Vec<String>, bars: Vec<Vec<Bar>>, splits: Option<SplitBounds>) -> Result<Self> {
        if assets.is_empty() || assets.len() != bars.len() {
            return Err(DataError::Shape(format!(
                "{} asset names for {} bar series",
                assets.len(),
                bars.len()
            )));
        }
        let dates: Vec<NaiveDate> = bars[0].iter().map(|b| b.date).collect();
        if dates.is_empty() {
            return Err(DataError::Shape("empty bar series".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::Shape("dates must be strictly increasing".into()));
        }
        let misaligned: Vec<String> = assets
            .iter()
            .zip(&bars)
            .filter(|(_, b)| b.len() != dates.len() || b.iter().zip(&dates).any(|(x, d)| x.date != *d))
            .map(|(a, _)| a.clone())
            .collect();
        if !misaligned.is_empty() {
            return Err(DataError::Alignment { assets: misaligned });
        }
        for (asset, series) in assets.iter().zip(&bars) {
            for (row, bar) in series.iter().enumerate() {
                bar.validate().map_err(|message| DataError::Validation {
                    path: PathBuf::from(asset),
                    row: row + 1,
                    message,
                })?;
            }
        }
        let len = dates.len();
        let splits = match splits {
            Some(s) => SplitBounds::new(s.train, s.valid, s.test, len)?,
            None => SplitBounds::whole(len),
        };
        Ok(Self {
            assets,
            dates,
            bars,
            splits,
        })
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn bars(&self, asset: usize) -> &[Bar] {
        &self.bars[asset]
    }

    pub fn bar(&self, asset: usize, t: usize) -> &Bar {
        &self.bars[asset][t]
    }

    pub fn close(&self, asset: usize, t: usize) -> f64 {
        self.bars[asset][t].close
    }

    pub fn splits(&self) -> &SplitBounds {
        &self.splits
    }

    pub fn with_splits(mut self, splits: SplitBounds) -> Result<Self> {
        self.splits = SplitBounds::new(splits.train, splits.valid, splits.test, self.len())?;
        Ok(self)
    }

    pub fn with_split_dates(self, dates: &SplitDates) -> Result<Self> {
        let a = self.dates.partition_point(|d| *d < dates.valid_start);
        let b = self.dates.partition_point(|d| *d < dates.test_start);
        let len = self.len();
        let splits = SplitBounds::new(0..a, a..b, b..len, len)?;
        self.with_splits(splits)
    }

    /// Mutable bar access for tests that perturb the future.
    pub fn bar_mut(&mut self, asset: usize, t: usize) -> &mut Bar {
        &mut self.bars[asset][t]
    }

    /// Per-asset price relatives `close_{t+1} / close_t`.
    pub fn relatives(&self, t: usize) -> Vec<f64> {
        (0..self.n_assets())
            .map(|i| self.close(i, t + 1) / self.close(i, t))
            .collect()
    }

    /// Per-asset close movement `close_t - close_{t-1}`.
    pub fn movement(&self, asset: usize, t: usize) -> f64 {
        self.close(asset, t) - self.close(asset, t - 1)
    }
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub layout: CsvLayout,
    pub date: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub adj_close: String,
    /// Ticker column, used only by the long layout.
    pub ticker: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvLayout {
    /// One file per asset; a directory path loads every `*.csv` inside,
    /// asset name = file stem.
    PerAsset,
    /// A single file with a ticker column.
    Long,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            layout: CsvLayout::PerAsset,
            date: "date".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            adj_close: "adj_close".into(),
            ticker: "tic".into(),
        }
    }
}

struct Columns {
    date: usize,
    open: usize,
    high: usize,
    low: usize,
    close: usize,
    adj: usize,
    ticker: Option<usize>,
}

impl Columns {
    fn resolve(path: &Path, headers: &csv::StringRecord, schema: &CsvSchema) -> Result<Self> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| DataError::Parse {
                    path: path.to_path_buf(),
                    row: 0,
                    message: format!("missing column '{name}'"),
                })
        };
        Ok(Self {
            date: find(&schema.date)?,
            open: find(&schema.open)?,
            high: find(&schema.high)?,
            low: find(&schema.low)?,
            close: find(&schema.close)?,
            adj: find(&schema.adj_close)?,
            ticker: match schema.layout {
                CsvLayout::Long => Some(find(&schema.ticker)?),
                CsvLayout::PerAsset => None,
            },
        })
    }
}

fn read_rows(path: &Path, schema: &CsvSchema) -> Result<Vec<(Option<String>, Bar)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, 0, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, 0, e))?.clone();
    let cols = Columns::resolve(path, &headers, schema)?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1 of the file
        let row = i + 2;
        let record = record.map_err(|e| csv_err(path, row, e))?;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let parse_err = |message: String| DataError::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };
        let price = |idx: usize, name: &str| -> Result<f64> {
            field(idx)
                .parse::<f64>()
                .map_err(|e| parse_err(format!("column '{name}': {e}")))
        };
        let date = NaiveDate::parse_from_str(field(cols.date), "%Y-%m-%d")
            .map_err(|e| parse_err(format!("date '{}': {e}", field(cols.date))))?;
        let bar = Bar {
            date,
            open: price(cols.open, &schema.open)?,
            high: price(cols.high, &schema.high)?,
            low: price(cols.low, &schema.low)?,
            close: price(cols.close, &schema.close)?,
            adj_close: price(cols.adj, &schema.adj_close)?,
        };
        bar.validate().map_err(|message| DataError::Validation {
            path: path.to_path_buf(),
            row,
            message,
        })?;
        out.push((cols.ticker.map(|c| field(c).to_string()), bar));
    }
    Ok(out)
}

fn csv_err(path: &Path, row: usize, e: csv::Error) -> DataError {
    if let csv::ErrorKind::Io(_) = e.kind() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return DataError::Io {
                path: path.to_path_buf(),
                source: io,
            };
        }
        unreachable!()
    }
    let row = e.position().map(|p| p.line() as usize).unwrap_or(row);
    DataError::Parse {
        path: path.to_path_buf(),
        row,
        message: e.to_string(),
    }
}

/// Loads a date-aligned market from CSV.
///
/// Per-asset layout accepts a single file (asset = file stem) or a directory
/// of `*.csv` files. Long layout reads one file and groups by ticker. Assets
/// that do not cover exactly the shared date index are rejected.
pub fn load_csv(path: &Path, schema: &CsvSchema, split_dates: Option<&SplitDates>) -> Result<MarketSeries> {
    let mut per_asset: BTreeMap<String, Vec<Bar>> = BTreeMap::new();
    match schema.layout {
        CsvLayout::PerAsset => {
            let files: Vec<PathBuf> = if path.is_dir() {
                let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                    .map_err(|source| DataError::Io {
                        path: path.to_path_buf(),
                        source,
                    })?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                    .collect();
                files.sort();
                files
            } else {
                vec![path.to_path_buf()]
            };
            for file in files {
                let name = file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let bars = read_rows(&file, schema)?.into_iter().map(|(_, b)| b).collect();
                per_asset.insert(name, bars);
            }
        }
        CsvLayout::Long => {
            for (ticker, bar) in read_rows(path, schema)? {
                per_asset.entry(ticker.unwrap_or_default()).or_default().push(bar);
            }
        }
    }
    if per_asset.is_empty() || per_asset.values().all(|b| b.is_empty()) {
        return Err(DataError::Empty(path.to_path_buf()));
    }
    for bars in per_asset.values_mut() {
        bars.sort_by_key(|b| b.date);
    }

    // Shared index = intersection of dates; any asset missing a shared date
    // or carrying extra dates is misaligned.
    let all_dates: BTreeSet<NaiveDate> = per_asset.values().flatten().map(|b| b.date).collect();
    let misaligned: Vec<String> = per_asset
        .iter()
        .filter(|(_, bars)| {
            bars.len() != all_dates.len() || bars.windows(2).any(|w| w[0].date == w[1].date)
        })
        .map(|(a, _)| a.clone())
        .collect();
    if !misaligned.is_empty() {
        return Err(DataError::Alignment { assets: misaligned });
    }

    let (assets, bars): (Vec<String>, Vec<Vec<Bar>>) = per_asset.into_iter().unzip();
    let series = MarketSeries::new(assets, bars, None)?;
    match split_dates {
        Some(d) => series.with_split_dates(d),
        None => Ok(series),
    }
}

/// Raw (pre-normalization) features of all assets on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFeatures {
    pub t: usize,
    /// `values[asset][feature]`
    pub values: Vec<[f64; FEATURE_COUNT]>,
}

impl StateFeatures {
    /// Asset-major flattening used as the policy input.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|row| row.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }
}

/// Features of one asset from the day's bar and its trailing closes.
/// `closes` holds at least [`WARMUP`] closes ending at `close_t`.
pub fn feature_row(open: f64, high: f64, low: f64, adj_close: f64, closes: &[f64]) -> [f64; FEATURE_COUNT] {
    debug_assert!(closes.len() >= WARMUP);
    let n = closes.len();
    let close = closes[n - 1];
    let mut row = [0.0; FEATURE_COUNT];
    row[0] = open / close - 1.0;
    row[1] = high / close - 1.0;
    row[2] = low / close - 1.0;
    row[3] = adj_close / close - 1.0;
    row[4] = close / closes[n - 2] - 1.0;
    for (slot, &k) in MA_WINDOWS.iter().enumerate() {
        let mean = closes[n - k..].iter().sum::<f64>() / k as f64;
        row[5 + slot] = mean / close - 1.0;
    }
    row
}

/// Raw features at day `t`; requires `t >= WARMUP`.
pub fn compute_features(series: &MarketSeries, t: usize) -> Result<StateFeatures> {
    if t < WARMUP || t >= series.len() {
        return Err(DataError::Bounds {
            t,
            needed: WARMUP,
            len: series.len(),
        });
    }
    let mut closes = Vec::with_capacity(WARMUP);
    let values = (0..series.n_assets())
        .map(|i| {
            let bars = series.bars(i);
            closes.clear();
            closes.extend(bars[t + 1 - WARMUP..=t].iter().map(|b| b.close));
            let b = &bars[t];
            feature_row(b.open, b.high, b.low, b.adj_close, &closes)
        })
        .collect();
    Ok(StateFeatures { t, values })
}

/// Per-(asset, feature) z-score statistics fitted on one day range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<[f64; FEATURE_COUNT]>,
    pub std: Vec<[f64; FEATURE_COUNT]>,
}

impl Normalizer {
    /// Fits on raw feature rows (sample std, ddof = 1).
    pub fn fit(rows: &[StateFeatures], assets: &[String]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(DataError::TooFewRows { rows: rows.len() });
        }
        let n = assets.len();
        let count = rows.len() as f64;
        let mut mean = vec![[0.0; FEATURE_COUNT]; n];
        let mut std = vec![[0.0; FEATURE_COUNT]; n];
        for i in 0..n {
            for f in 0..FEATURE_COUNT {
                let m = rows.iter().map(|r| r.values[i][f]).sum::<f64>() / count;
                let var = rows.iter().map(|r| (r.values[i][f] - m).powi(2)).sum::<f64>() / (count - 1.0);
                let s = var.sqrt();
                if !(s > 0.0) || !s.is_finite() {
                    return Err(DataError::DegenerateFeature {
                        asset: assets[i].clone(),
                        feature: FEATURE_NAMES[f],
                    });
                }
                mean[i][f] = m;
                std[i][f] = s;
            }
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, raw: &StateFeatures) -> StateFeatures {
        let values = raw
            .values
            .iter()
            .enumerate()
            .map(|(i, row)| std::array::from_fn(|f| (row[f] - self.mean[i][f]) / self.std[i][f]))
            .collect();
        StateFeatures { t: raw.t, values }
    }

    pub fn invert(&self, normalized: &StateFeatures) -> StateFeatures {
        let values = normalized
            .values
            .iter()
            .enumerate()
            .map(|(i, row)| std::array::from_fn(|f| row[f] * self.std[i][f] + self.mean[i][f]))
            .collect();
        StateFeatures {
            t: normalized.t,
            values,
        }
    }

    /// Normalizes a single feature value.
    pub fn apply_one(&self, asset: usize, feature: usize, raw: f64) -> f64 {
        (raw - self.mean[asset][feature]) / self.std[asset][feature]
    }
}

/// Fits a normalizer on the usable days of `split`.
pub fn fit_normalizer(series: &MarketSeries, split: Split) -> Result<Normalizer> {
    let rows = series
        .splits()
        .usable(split)
        .map(|t| compute_features(series, t))
        .collect::<Result<Vec<_>>>()?;
    Normalizer::fit(&rows, series.assets())
}

pub fn apply_normalizer(norm: &Normalizer, raw: &StateFeatures) -> StateFeatures {
    norm.apply(raw)
}
