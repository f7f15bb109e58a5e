//! Experiment runner: one pretrained policy per seed, a static baseline and
//! a planner run per grid cell, metrics aggregated over seeds.

use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use planfolio_core::env::{self, Trajectory};
use planfolio_core::forecast::{
    calibration_set, noise_stats, CheatCalibration, CheatForecaster, ContextMeanForecaster, ExternalForecaster, Forecaster,
    NoiseCalibration, PerfectForesight, RidgeForecaster,
};
use planfolio_core::marketdata::{self, MarketSeries, Normalizer, Split, SplitBounds};
use planfolio_core::metrics::{MetricsReport, ValueCurve, METRIC_NAMES};
use planfolio_core::pilot::{self, StepReport, Variant};
use planfolio_core::policy::{self, ActMode, PolicyConfig, PolicyParams, PretrainReport, Snapshot};
use planfolio_core::seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DataConfig, ExperimentConfig, ForecastModel};
use crate::synthetic::generate_synthetic;
use crate::{io_err, write_file, HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const BASELINE_LABEL: &str = "baseline";

/// Market data plus the training-split normalizer.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub series: MarketSeries,
    pub norm: Normalizer,
    /// Usable training days.
    pub train: Range<usize>,
    /// Usable test days; backtests run over this range.
    pub test: Range<usize>,
}

pub fn load_data(data: &DataConfig) -> Result<MarketSeries> {
    match data {
        DataConfig::Synthetic {
            market,
            train_fraction,
            valid_fraction,
        } => generate_synthetic(market, (*train_fraction, *valid_fraction)),
        DataConfig::Csv {
            path,
            schema,
            split_dates,
            train_fraction,
            valid_fraction,
        } => {
            let series = marketdata::load_csv(path, schema, split_dates.as_ref())?;
            if split_dates.is_some() {
                Ok(series)
            } else {
                let bounds = SplitBounds::by_fraction(series.len(), *train_fraction, *valid_fraction)?;
                Ok(series.with_splits(bounds)?)
            }
        }
    }
}

pub fn prepare(config: &ExperimentConfig) -> Result<Workspace> {
    let series = load_data(&config.data)?;
    let norm = marketdata::fit_normalizer(&series, Split::Train)?;
    let train = series.splits().usable(Split::Train);
    let test = series.splits().usable(Split::Test);
    if test.len() < 2 {
        return Err(HarnessError::Config(format!("test split {test:?} has no tradeable days")));
    }
    Ok(Workspace {
        series,
        norm,
        train,
        test,
    })
}

pub fn policy_config(config: &ExperimentConfig, n_assets: usize, run_seed: u64) -> PolicyConfig {
    let p = &config.policy;
    PolicyConfig {
        hidden: p.hidden.clone(),
        shared_trunk: p.shared_trunk,
        actor_head_gain: p.actor_head_gain,
        critic_head_gain: p.critic_head_gain,
        initial_log_std: p.initial_log_std,
        value_scale: p.value_scale,
        mode: config.pretrain.algo.policy_mode(),
        init_seed: seed::mix(run_seed, &[seed::INIT_STREAM]),
        ..PolicyConfig::for_assets(n_assets)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the settings that determine experiment outputs (pool size, log
/// switches and output location excluded).
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = ExperimentConfig {
        out_dir: PathBuf::new(),
        workers: 0,
        log_steps: false,
        ..config.clone()
    };
    sha256_hex(canonical.to_toml().as_bytes())
}

fn pretrain_key(config: &ExperimentConfig, ws: &Workspace, policy: &PolicyConfig, run_seed: u64) -> String {
    let data = serde_json::to_vec(&ws.series).expect("series serializes");
    let key = serde_json::json!({
        "data": sha256_hex(&data),
        "policy": policy,
        "pretrain": config.pretrain,
        "env": config.env,
        "range": [ws.train.start, ws.train.end],
        "seed": run_seed,
    });
    sha256_hex(key.to_string().as_bytes())[..16].to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PretrainCacheEntry {
    report: PretrainReport,
    checkpoint: String,
}

/// Pretrains the seed's policy on the training split. With `cache_dir`,
/// results are stored under a hash of everything that affects them and
/// reused on later calls.
pub fn pretrained_policy(
    config: &ExperimentConfig,
    ws: &Workspace,
    run_seed: u64,
    cache_dir: Option<&Path>,
) -> Result<(PolicyParams, PretrainReport)> {
    let pc = policy_config(config, ws.series.n_assets(), run_seed);
    let cache_path = cache_dir.map(|d| d.join(format!("pretrain-{}.json", pretrain_key(config, ws, &pc, run_seed))));
    if let Some(path) = cache_path.as_deref().filter(|p| p.exists()) {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let entry: PretrainCacheEntry =
            serde_json::from_str(&text).map_err(|e| HarnessError::Results(format!("{}: {e}", path.display())))?;
        let params = Snapshot::from_json(&entry.checkpoint)?.into_params()?;
        return Ok((params, entry.report));
    }
    let initial = PolicyParams::new(pc)?;
    let (params, report) = policy::pretrain(
        &ws.series,
        &ws.norm,
        ws.train.clone(),
        &initial,
        &config.env,
        &config.pretrain,
        seed::mix(run_seed, &[seed::TRAIN_STREAM]),
    )?;
    if let Some(path) = cache_path {
        let entry = PretrainCacheEntry {
            report: report.clone(),
            checkpoint: policy::checkpoint(&params).to_json(),
        };
        write_file(&path, serde_json::to_string(&entry).expect("cache entry serializes"))?;
    }
    Ok((params, report))
}

/// The configured forecaster, fitted on the training split for horizons up
/// to `max_horizon` where it needs fitting.
pub fn base_forecaster(config: &ExperimentConfig, ws: &Workspace, max_horizon: usize) -> Result<Arc<dyn Forecaster>> {
    let f = &config.forecast;
    Ok(match f.model {
        ForecastModel::Ridge => Arc::new(RidgeForecaster::fit(
            &ws.series,
            ws.series.splits().range(Split::Train),
            max_horizon,
            f.ridge_lambda,
        )?),
        ForecastModel::ContextMean => Arc::new(ContextMeanForecaster {
            window: f.context_window,
        }),
        ForecastModel::PerfectForesight => Arc::new(PerfectForesight),
        ForecastModel::External => {
            let path = f.external_path.as_deref().expect("validated");
            Arc::new(ExternalForecaster::load(path)?)
        }
    })
}

/// One planner configuration of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub horizon: usize,
    pub r2: Option<f64>,
    pub variant: Variant,
}

impl CellSpec {
    pub fn label(&self) -> String {
        let mut s = format!("pilot h={} {}", self.horizon, self.variant);
        if let Some(r) = self.r2 {
            s.push_str(&format!(" r2={r}"));
        }
        s
    }
}

pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' { c } else { '-' })
        .collect::<String>()
        .replace("--", "-")
}

pub fn cells(config: &ExperimentConfig) -> Vec<CellSpec> {
    let r2: Vec<Option<f64>> = if config.sweep.r2.is_empty() {
        vec![None]
    } else {
        config.sweep.r2.iter().copied().map(Some).collect()
    };
    let mut out = Vec::new();
    for &horizon in &config.horizons() {
        for &r2 in &r2 {
            for &variant in &config.variants() {
                out.push(CellSpec { horizon, r2, variant });
            }
        }
    }
    out
}

/// Forecaster and noise calibration for one cell.
#[derive(Clone)]
pub struct CellForecast {
    pub forecaster: Arc<dyn Forecaster>,
    pub cheat: Option<CheatCalibration>,
    pub noise: NoiseCalibration,
}

/// Synthetic blends are calibrated on the test split; noise statistics on
/// training base days whose horizon stays inside the training split.
pub fn cell_forecast(
    config: &ExperimentConfig,
    ws: &Workspace,
    base: &Arc<dyn Forecaster>,
    cell: &CellSpec,
) -> Result<CellForecast> {
    let h = cell.horizon;
    let (forecaster, cheat): (Arc<dyn Forecaster>, _) = match cell.r2 {
        None => (base.clone(), None),
        Some(target) => {
            let set = calibration_set(base.as_ref(), &ws.series, ws.test.clone(), h, config.forecast.context_window)?;
            let (calib, _) = set.calibrate(target)?;
            (Arc::new(CheatForecaster::new(base.clone(), calib.c)?), Some(calib))
        }
    };
    let mpc = config.mpc_for(h, cell.variant);
    let noise = if mpc.noise_scale > 0.0 {
        let bases = ws.train.start..ws.train.end.saturating_sub(h);
        noise_stats(forecaster.as_ref(), &ws.series, &ws.norm, bases, h)?
    } else {
        NoiseCalibration::zeros(h)
    };
    Ok(CellForecast {
        forecaster,
        cheat,
        noise,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub label: String,
    pub slug: String,
    pub horizon: Option<usize>,
    pub variant: Option<Variant>,
    pub r2_target: Option<f64>,
    pub forecaster: Option<String>,
    pub base_r2: Option<f64>,
    pub blend_c: Option<f64>,
    pub achieved_r2: Option<f64>,
    pub noise_variance: Vec<f64>,
    pub error: Option<String>,
}

pub fn cell_info(cell: &CellSpec, f: &Result<CellForecast>) -> CellInfo {
    let label = cell.label();
    let ok = f.as_ref().ok();
    let cheat = ok.and_then(|f| f.cheat.as_ref());
    CellInfo {
        slug: slug(&label),
        label,
        horizon: Some(cell.horizon),
        variant: Some(cell.variant),
        r2_target: cell.r2,
        forecaster: ok.map(|f| f.forecaster.name()),
        base_r2: cheat.map(|c| c.base_r2),
        blend_c: cheat.map(|c| c.c),
        achieved_r2: cheat.map(|c| c.achieved),
        noise_variance: ok.map(|f| f.noise.variance.clone()).unwrap_or_default(),
        error: f.as_ref().err().map(|e| e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    /// Portfolio values over the test split, starting at the initial value.
    pub values: Vec<f64>,
    pub metrics: Option<MetricsReport>,
    /// Days on which adaptation was abandoned for the unadapted action.
    pub fallback_days: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: Option<f64>,
    /// Sample std; only with at least two seeds.
    pub std: Option<f64>,
    /// Seeds on which the metric is defined.
    pub n: usize,
}

impl MetricStat {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: None, std: None, n };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std = (n >= 2).then(|| (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Self {
            mean: Some(mean),
            std,
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub label: String,
    pub algorithm: String,
    pub horizon: Option<usize>,
    pub variant: Option<Variant>,
    pub r2_target: Option<f64>,
    pub seeds: usize,
    pub seeds_ok: usize,
    /// In [`METRIC_NAMES`] order.
    pub metrics: Vec<MetricStat>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub schema_version: u32,
    pub name: String,
    pub config_sha256: String,
    pub assets: Vec<String>,
    pub test_dates: [String; 2],
    pub seeds: Vec<u64>,
    pub metric_names: Vec<String>,
    pub cells: Vec<CellInfo>,
    pub rows: Vec<ResultRow>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentResults {
    pub fn row(&self, label: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("results.json");
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let results: Self =
            serde_json::from_str(&text).map_err(|e| HarnessError::Results(format!("{}: {e}", path.display())))?;
        if results.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Results(format!(
                "{}: schema version {} (expected {SCHEMA_VERSION})",
                path.display(),
                results.schema_version
            )));
        }
        Ok(results)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }
}

fn aggregate(label: &str, info: &CellInfo, runs: &[&RunRecord]) -> ResultRow {
    let ok: Vec<&MetricsReport> = runs.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let metrics = (0..METRIC_NAMES.len())
        .map(|m| {
            let samples: Vec<f64> = ok.iter().filter_map(|r| r.values()[m]).collect();
            MetricStat::of(&samples)
        })
        .collect();
    let mut errors: Vec<String> = runs
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("seed {}: {e}", r.seed)))
        .collect();
    if let Some(e) = &info.error {
        errors = vec![e.clone()];
    }
    ResultRow {
        label: label.to_string(),
        algorithm: if info.horizon.is_some() { "pilot" } else { BASELINE_LABEL }.into(),
        horizon: info.horizon,
        variant: info.variant,
        r2_target: info.r2_target,
        seeds: runs.len(),
        seeds_ok: ok.len(),
        metrics,
        errors,
    }
}

fn record(label: &str, run_seed: u64, outcome: Result<(Trajectory, usize)>) -> RunRecord {
    match outcome.and_then(|(traj, fallbacks)| {
        let metrics = ValueCurve::new(traj.values.clone())
            .map(|c| MetricsReport::compute(&c))
            .map_err(|e| HarnessError::Results(e.to_string()))?;
        Ok((traj.values, metrics, fallbacks))
    }) {
        Ok((values, metrics, fallback_days)) => RunRecord {
            label: label.into(),
            seed: run_seed,
            values,
            metrics: Some(metrics),
            fallback_days,
            error: None,
        },
        Err(e) => RunRecord {
            label: label.into(),
            seed: run_seed,
            values: Vec::new(),
            metrics: None,
            fallback_days: 0,
            error: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, Serialize)]
struct SeedLog<'a> {
    cell: &'a CellInfo,
    pretrain: Option<&'a PretrainReport>,
    run: &'a RunRecord,
}

/// Runs the whole grid and writes `results.json`, `table.txt`, SVG curves,
/// per-seed run files and the resolved `config.toml` under `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentResults> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    write_file(&out.join("config.toml"), config.to_toml())?;
    let ws = prepare(config)?;
    let cache = out.join("cache");

    let pretrained: Vec<Result<(PolicyParams, PretrainReport)>> = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&s| pretrained_policy(config, &ws, s, Some(&cache)))
            .collect()
    });

    let specs = cells(config);
    let max_h = specs.iter().map(|c| c.horizon).max().unwrap_or(1);
    let base = base_forecaster(config, &ws, max_h);
    let forecasts: Vec<Result<CellForecast>> = pool.install(|| {
        specs
            .par_iter()
            .map(|cell| match &base {
                Ok(b) => cell_forecast(config, &ws, b, cell),
                Err(e) => Err(HarnessError::Results(format!("base forecaster: {e}"))),
            })
            .collect()
    });

    let mut infos = vec![CellInfo {
        label: BASELINE_LABEL.into(),
        slug: BASELINE_LABEL.into(),
        horizon: None,
        variant: None,
        r2_target: None,
        forecaster: None,
        base_r2: None,
        blend_c: None,
        achieved_r2: None,
        noise_variance: Vec::new(),
        error: None,
    }];
    infos.extend(specs.iter().zip(&forecasts).map(|(cell, f)| cell_info(cell, f)));

    // job (cell index into `infos`, seed index); cell 0 is the baseline
    let jobs: Vec<(usize, usize)> = (0..infos.len())
        .flat_map(|c| (0..config.seeds.len()).map(move |s| (c, s)))
        .collect();
    let outcomes: Vec<(RunRecord, Vec<StepReport>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, s)| {
                let run_seed = config.seeds[s];
                let label = &infos[c].label;
                let params = match &pretrained[s] {
                    Ok((p, _)) => p,
                    Err(e) => return (record(label, run_seed, Err(HarnessError::Results(format!("pretrain: {e}")))), vec![]),
                };
                if c == 0 {
                    let traj = env::run_episode(
                        &ws.series,
                        &ws.norm,
                        ws.test.clone(),
                        params,
                        ActMode::Deterministic,
                        run_seed,
                        &config.env,
                    );
                    return (record(label, run_seed, traj.map(|t| (t, 0)).map_err(Into::into)), vec![]);
                }
                let cell = &specs[c - 1];
                let f = match &forecasts[c - 1] {
                    Ok(f) => f,
                    Err(e) => return (record(label, run_seed, Err(HarnessError::Results(e.to_string()))), vec![]),
                };
                let mpc = config.mpc_for(cell.horizon, cell.variant);
                match pilot::run_pilot(
                    &ws.series,
                    &ws.norm,
                    ws.test.clone(),
                    params,
                    f.forecaster.as_ref(),
                    &f.noise,
                    &mpc,
                    &config.env,
                    run_seed,
                ) {
                    Ok((traj, steps)) => {
                        let fallbacks = steps.iter().filter(|r| r.failure.is_some()).count();
                        (record(label, run_seed, Ok((traj, fallbacks))), steps)
                    }
                    Err(e) => (record(label, run_seed, Err(e.into())), vec![]),
                }
            })
            .collect()
    });

    let nseeds = config.seeds.len();
    let mut rows = Vec::with_capacity(infos.len());
    for (c, info) in infos.iter().enumerate() {
        let runs: Vec<&RunRecord> = outcomes[c * nseeds..(c + 1) * nseeds].iter().map(|(r, _)| r).collect();
        rows.push(aggregate(&info.label, info, &runs));
    }
    for (&(c, s), (run, steps)) in jobs.iter().zip(&outcomes) {
        let dir = out.join("runs").join(&infos[c].slug);
        let log = SeedLog {
            cell: &infos[c],
            pretrain: pretrained[s].as_ref().ok().map(|(_, r)| r),
            run,
        };
        let mut text = serde_json::to_string_pretty(&log).expect("run log serializes");
        text.push('\n');
        write_file(&dir.join(format!("seed-{}.json", run.seed)), text)?;
        if config.log_steps && c > 0 {
            let mut lines = String::new();
            for r in steps {
                lines.push_str(&serde_json::to_string(r).expect("step serializes"));
                lines.push('\n');
            }
            write_file(&dir.join(format!("seed-{}.steps.jsonl", run.seed)), lines)?;
        }
    }

    let dates = ws.series.dates();
    let results = ExperimentResults {
        schema_version: SCHEMA_VERSION,
        name: config.name.clone(),
        config_sha256: config_hash(config),
        assets: ws.series.assets().to_vec(),
        test_dates: [dates[ws.test.start].to_string(), dates[ws.test.end - 1].to_string()],
        seeds: config.seeds.clone(),
        metric_names: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
        cells: infos,
        rows,
        runs: outcomes.into_iter().map(|(r, _)| r).collect(),
    };
    write_file(&out.join("results.json"), results.to_json())?;
    crate::report::write_reports(&results, out)?;
    Ok(results)
}
