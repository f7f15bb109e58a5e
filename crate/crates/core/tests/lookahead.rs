mod common;

use planfolio_core::env::EnvConfig;
use planfolio_core::forecast::{forecast, NoiseCalibration, RidgeForecaster};
use planfolio_core::marketdata::{compute_features, MarketSeries, Split};
use planfolio_core::pilot::{run_pilot, MpcConfig};
use planfolio_core::policy::{PolicyConfig, PolicyMode, PolicyParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mutate_after(series: &MarketSeries, t: usize, rng: &mut ChaCha8Rng) -> MarketSeries {
    let mut m = series.clone();
    for i in 0..m.n_assets() {
        for s in t + 1..m.len() {
            let k = 0.5 + rng.random::<f64>();
            let b = m.bar_mut(i, s);
            b.open *= k;
            b.high *= k;
            b.low *= k;
            b.close *= k;
            b.adj_close *= k;
        }
    }
    m
}

#[test]
fn features_forecasts_and_actions_ignore_the_future() {
    let s = common::random_series(&[0.0004, -0.0003, 0.0002], 0.015, 360, 31);
    let norm = common::train_normalizer(&s);
    let train = s.splits().range(Split::Train);
    let ridge = RidgeForecaster::fit(&s, train.clone(), 3, 1.0).unwrap();
    let params = PolicyParams::new(PolicyConfig {
        hidden: vec![8],
        mode: PolicyMode::Stochastic,
        init_seed: 2,
        ..PolicyConfig::for_assets(3)
    })
    .unwrap();
    let config = MpcConfig {
        horizon: 3,
        epochs: 1,
        ..MpcConfig::default()
    };
    let env = EnvConfig::default();
    let calib = NoiseCalibration::zeros(3);
    let start = s.splits().usable(Split::Valid).start;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let t = rng.random_range(start..s.len() - 2);
        let m = mutate_after(&s, t, &mut rng);
        assert_ne!(m.close(0, t + 1), s.close(0, t + 1));

        assert_eq!(compute_features(&s, t).unwrap(), compute_features(&m, t).unwrap());

        let refit = RidgeForecaster::fit(&m, train.clone(), 3, 1.0).unwrap();
        assert_eq!(refit, ridge);
        assert_eq!(forecast(&ridge, &s, t, 3).unwrap(), forecast(&refit, &m, t, 3).unwrap());

        let (a, _) = run_pilot(&s, &norm, start..t + 2, &params, &ridge, &calib, &config, &env, 4).unwrap();
        let (b, _) = run_pilot(&m, &norm, start..t + 2, &params, &refit, &calib, &config, &env, 4).unwrap();
        assert_eq!(a.weights, b.weights);
    }
}
