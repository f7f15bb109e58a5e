#![allow(dead_code)]

use planfolio::config::{DataConfig, ExperimentConfig, ForecastModel};
use planfolio::synthetic::SyntheticMarketSpec;

/// Small, fast experiment on a synthetic market.
pub fn small_config(seeds: Vec<u64>) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        name: "small".into(),
        seeds,
        data: DataConfig::Synthetic {
            market: SyntheticMarketSpec {
                assets: 3,
                length: 220,
                signal: 0.5,
                seed: 5,
                ..Default::default()
            },
            train_fraction: 0.6,
            valid_fraction: 0.1,
        },
        ..Default::default()
    };
    c.policy.hidden = vec![8];
    c.pretrain.epochs = 1;
    c.forecast.model = ForecastModel::ContextMean;
    c.mpc.horizon = 3;
    c.mpc.epochs = 2;
    c
}

/// Relative paths and contents of every file under `dir` with one of `exts`.
pub fn files(dir: &std::path::Path, exts: &[&str]) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().and_then(|x| x.to_str()).is_some_and(|x| exts.contains(&x)) {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
