use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use planfolio::config::ExperimentConfig;
use planfolio::experiment::{self, cell_forecast, cell_info, cells, ExperimentResults};
use planfolio::{report, HarnessError, Result};
use planfolio_core::forecast::{calibration_set, write_forecast_csv};
use planfolio_core::policy;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "planfolio", version, about = "Portfolio policies with forecast-driven inference-time adaptation")]
struct Cli {
    /// TOML experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain one policy per seed and write checkpoints.
    Pretrain,
    /// Fit the base forecaster and write its test-split forecasts as CSV.
    ForecastFit {
        /// Largest horizon to forecast; defaults to the largest swept horizon.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Calibrate synthetic-forecast blends and noise levels for every cell.
    ForecastCalibrate,
    /// Baseline and planner for the `mpc` section (sweep axes ignored).
    Run,
    /// Baseline and planner over the sweep grid.
    Sweep {
        /// Axis override such as `r2=0.001,0.3,0.8`, `h=1,15,50` or
        /// `variant=vanilla,noise_lambda`; repeatable.
        #[arg(long)]
        axis: Vec<String>,
    },
    /// Regenerate the table and plots from an existing results directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seeds = vec![s];
    }
    if let Some(o) = &cli.out {
        config.out_dir = o.clone();
    }
    config.validate()?;
    Ok(config)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| io(d, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io(path, e))
}

fn io(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn summary(results: &ExperimentResults, out: &Path) -> serde_json::Value {
    let rows: Vec<_> = results
        .rows
        .iter()
        .map(|r| {
            json!({
                "label": r.label,
                "total_return": r.metrics[0].mean,
                "seeds_ok": r.seeds_ok,
                "errors": r.errors.len(),
            })
        })
        .collect();
    json!({ "status": "ok", "out": out, "rows": rows })
}

fn execute(cli: &Cli) -> Result<serde_json::Value> {
    match &cli.command {
        Command::Report { input } => {
            let results = ExperimentResults::load(input)?;
            report::write_reports(&results, input)?;
            Ok(json!({ "status": "ok", "out": input, "rows": results.rows.len() }))
        }
        Command::Run => {
            let mut config = load_config(cli)?;
            config.sweep = Default::default();
            let out = config.out_dir.clone();
            Ok(summary(&experiment::run_experiment(&config, &out)?, &out))
        }
        Command::Sweep { axis } => {
            let mut config = load_config(cli)?;
            for a in axis {
                config.apply_axis(a)?;
            }
            let out = config.out_dir.clone();
            Ok(summary(&experiment::run_experiment(&config, &out)?, &out))
        }
        Command::Pretrain => {
            let config = load_config(cli)?;
            let out = &config.out_dir;
            let ws = experiment::prepare(&config)?;
            let mut reports = Vec::new();
            for &s in &config.seeds {
                let (params, report) = experiment::pretrained_policy(&config, &ws, s, Some(&out.join("cache")))?;
                let path = out.join("checkpoints").join(format!("seed-{s}.json"));
                write(&path, &policy::checkpoint(&params).to_json())?;
                reports.push(json!({ "seed": s, "checkpoint": path, "report": report }));
            }
            write(&out.join("pretrain.json"), &(serde_json::to_string_pretty(&reports).expect("json") + "\n"))?;
            Ok(json!({ "status": "ok", "out": out, "seeds": config.seeds }))
        }
        Command::ForecastFit { horizon } => {
            let config = load_config(cli)?;
            let out = &config.out_dir;
            let ws = experiment::prepare(&config)?;
            let h = horizon.unwrap_or_else(|| config.horizons().into_iter().max().unwrap_or(1));
            if h == 0 {
                return Err(HarnessError::Config("horizon must be >= 1".into()));
            }
            let base = experiment::base_forecaster(&config, &ws, h)?;
            let set = calibration_set(base.as_ref(), &ws.series, ws.test.clone(), h, config.forecast.context_window)?;
            let per_horizon: Vec<Option<f64>> = (1..=h)
                .map(|k| {
                    let idx: Vec<usize> = (0..set.cells.len()).filter(|&i| set.cells[i].1 == k).collect();
                    let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
                    planfolio_core::forecast::r_squared(&pick(&set.base), &pick(&set.realized), &pick(&set.baseline)).ok()
                })
                .collect();
            let csv_path = out.join("forecasts.csv");
            let mut buf = Vec::new();
            write_forecast_csv(base.as_ref(), &ws.series, ws.test.start..ws.test.end - 1, h, &mut buf)?;
            if let Some(d) = csv_path.parent() {
                std::fs::create_dir_all(d).map_err(|e| io(d, e))?;
            }
            std::fs::write(&csv_path, buf).map_err(|e| io(&csv_path, e))?;
            let fit = json!({
                "forecaster": base.name(),
                "horizon": h,
                "test_r2": set.r_squared(&set.base).ok(),
                "test_r2_by_horizon": per_horizon,
                "forecasts": csv_path,
            });
            write(&out.join("forecast-fit.json"), &(serde_json::to_string_pretty(&fit).expect("json") + "\n"))?;
            Ok(json!({ "status": "ok", "out": out, "test_r2": fit["test_r2"] }))
        }
        Command::ForecastCalibrate => {
            let config = load_config(cli)?;
            let out = &config.out_dir;
            let ws = experiment::prepare(&config)?;
            let grid = cells(&config);
            let max_h = grid.iter().map(|c| c.horizon).max().unwrap_or(1);
            let base = experiment::base_forecaster(&config, &ws, max_h)?;
            let infos: Vec<_> = grid.iter().map(|c| cell_info(c, &cell_forecast(&config, &ws, &base, c))).collect();
            let failed = infos.iter().filter(|c| c.error.is_some()).count();
            write(&out.join("calibration.json"), &(serde_json::to_string_pretty(&infos).expect("json") + "\n"))?;
            Ok(json!({ "status": "ok", "out": out, "cells": infos.len(), "failed": failed }))
        }
    }
}

fn error_kind(e: &HarnessError) -> &'static str {
    match e {
        HarnessError::Config(_) => "config",
        HarnessError::Io { .. } => "io",
        HarnessError::Results(_) => "results",
        HarnessError::Data(_) => "data",
        HarnessError::Forecast(_) => "forecast",
        HarnessError::Policy(_) => "policy",
        HarnessError::Pilot(_) => "planner",
        HarnessError::Env(_) => "env",
    }
}

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message.replace('\n', " ") }));
    ExitCode::from(if kind == "usage" { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return fail("usage", &first);
        }
    };
    match execute(&cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(error_kind(&e), &e.to_string()),
    }
}
