mod common;

use planfolio::config::ForecastModel;
use planfolio::experiment::{self, run_experiment, ExperimentResults, BASELINE_LABEL};
use planfolio::synthetic::{generate_synthetic, SyntheticMarketSpec};
use planfolio_core::forecast::{calibration_set, RidgeForecaster};
use planfolio_core::marketdata::Split;

#[test]
fn zero_epochs_planner_matches_baseline_row() {
    let mut c = common::small_config(vec![3]);
    c.mpc.epochs = 0;
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&c, dir.path()).unwrap();
    assert_eq!(r.rows.len(), 2);
    let (base, pilot) = (&r.rows[0], &r.rows[1]);
    assert_eq!(base.label, BASELINE_LABEL);
    assert_eq!(base.metrics, pilot.metrics);
    assert!(base.metrics.iter().all(|m| m.std.is_none()));
    assert_eq!(r.runs[0].values, r.runs[1].values);
}

#[test]
fn several_seeds_fill_std_and_rows_match_seed_logs() {
    let c = common::small_config(vec![0, 1, 2, 3, 4]);
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&c, dir.path()).unwrap();
    for row in &r.rows {
        assert_eq!((row.seeds, row.seeds_ok), (5, 5));
        assert!(row.metrics[0].std.is_some() && row.metrics[3].std.is_some());
    }
    // the pilot row is recomputable from the per-seed files
    let slug = &r.cells[1].slug;
    let trs: Vec<f64> = c
        .seeds
        .iter()
        .map(|s| {
            let text = std::fs::read_to_string(dir.path().join("runs").join(slug).join(format!("seed-{s}.json"))).unwrap();
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            v["run"]["metrics"]["total_return"].as_f64().unwrap()
        })
        .collect();
    let mean = trs.iter().sum::<f64>() / 5.0;
    let sd = (trs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
    assert_eq!(r.rows[1].metrics[0].mean, Some(mean));
    assert!((r.rows[1].metrics[0].std.unwrap() - sd).abs() < 1e-15);
}

#[test]
fn failing_cell_is_recorded_and_others_continue() {
    let mut c = common::small_config(vec![0, 1]);
    // a perfect base has R² = 1, so a lower target is unreachable
    c.forecast.model = ForecastModel::PerfectForesight;
    c.sweep.r2 = vec![0.5, 1.0];
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&c, dir.path()).unwrap();
    let bad = r.row("pilot h=3 vanilla r2=0.5").unwrap();
    assert_eq!(bad.seeds_ok, 0);
    assert!(!bad.errors.is_empty());
    assert!(bad.metrics.iter().all(|m| m.mean.is_none()));
    let good = r.row("pilot h=3 vanilla r2=1").unwrap();
    assert_eq!(good.seeds_ok, 2);
    assert!(std::fs::read_to_string(dir.path().join("table.txt")).unwrap().contains("error [pilot h=3 vanilla r2=0.5]"));
}

#[test]
fn pretraining_is_cached_and_reused() {
    let mut c = common::small_config(vec![7]);
    c.pretrain.epochs = 2;
    let dir = tempfile::tempdir().unwrap();
    let a = run_experiment(&c, dir.path()).unwrap();
    let cached = common::files(&dir.path().join("cache"), &["json"]);
    assert_eq!(cached.len(), 1);
    let b = run_experiment(&c, dir.path()).unwrap();
    assert_eq!(a, b);
    c.pretrain.epochs = 3;
    run_experiment(&c, dir.path()).unwrap();
    assert_eq!(common::files(&dir.path().join("cache"), &["json"]).len(), 2);
}

#[test]
fn results_reload_and_config_is_echoed() {
    let mut c = common::small_config(vec![1]);
    c.log_steps = true;
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&c, dir.path()).unwrap();
    assert_eq!(ExperimentResults::load(dir.path()).unwrap(), r);
    let echoed = planfolio::ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(echoed, c);
    let steps = std::fs::read_to_string(dir.path().join("runs").join(&r.cells[1].slug).join("seed-1.steps.jsonl")).unwrap();
    assert_eq!(steps.lines().count(), r.runs[1].values.len() - 1);
    assert!(dir.path().join("curves.svg").exists());
    assert!(dir.path().join("curves").join(format!("{}.svg", r.cells[1].slug)).exists());
}

#[test]
fn signal_market_is_forecastable_out_of_sample() {
    let spec = SyntheticMarketSpec {
        signal: 0.8,
        seed: 3,
        ..Default::default()
    };
    let s = generate_synthetic(&spec, (0.6, 0.1)).unwrap();
    let ridge = RidgeForecaster::fit(&s, s.splits().range(Split::Train), 1, 1.0).unwrap();
    let set = calibration_set(&ridge, &s, s.splits().usable(Split::Test), 1, 30).unwrap();
    let r2 = set.r_squared(&set.base).unwrap();
    assert!(r2 > 0.0, "test R² {r2}");

    let flat = generate_synthetic(&SyntheticMarketSpec { signal: 0.0, ..spec }, (0.6, 0.1)).unwrap();
    let ridge = RidgeForecaster::fit(&flat, flat.splits().range(Split::Train), 1, 1.0).unwrap();
    let set = calibration_set(&ridge, &flat, flat.splits().usable(Split::Test), 1, 30).unwrap();
    assert!(set.r_squared(&set.base).unwrap() < r2);
}

#[test]
fn pretrained_policy_depends_on_seed_only_through_its_streams() {
    let c = common::small_config(vec![0]);
    let ws = experiment::prepare(&c).unwrap();
    let (a, _) = experiment::pretrained_policy(&c, &ws, 4, None).unwrap();
    let (b, _) = experiment::pretrained_policy(&c, &ws, 4, None).unwrap();
    let (d, _) = experiment::pretrained_policy(&c, &ws, 5, None).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.flat(), d.flat());
}
