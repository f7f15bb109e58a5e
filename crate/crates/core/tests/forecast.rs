mod common;

use planfolio_core::forecast::{
    blend, calibrate_cheat, calibration_set, context_mean_baseline, forecast, noise_stats, r_squared, write_forecast_csv,
    ExternalForecaster, PerfectForesight, RidgeForecaster,
};
use planfolio_core::marketdata::{compute_features, Split};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn context_mean_matches_loop() {
    let s = common::random_series(&[0.001, -0.001, 0.0], 0.02, 120, 5);
    for &(t, h) in &[(31usize, 30usize), (50, 5), (119, 10), (3, 2)] {
        let got = context_mean_baseline(&s, t, h).unwrap();
        for (i, g) in got.iter().enumerate() {
            let mut acc = 0.0;
            for j in 1..=h {
                acc += s.close(i, t - j) - s.close(i, t - j - 1);
            }
            assert!((g - acc / h as f64).abs() < 1e-12);
        }
    }
    assert!(context_mean_baseline(&s, 30, 30).is_err());
}

#[test]
fn perfect_foresight_file_reproduces_realized_states() {
    let s = common::random_series(&[0.001, 0.0], 0.02, 100, 6);
    let mut buf = Vec::new();
    write_forecast_csv(&PerfectForesight, &s, 40..60, 5, &mut buf).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pf.csv");
    std::fs::write(&path, buf).unwrap();
    let ext = ExternalForecaster::load(&path).unwrap();
    ext.check_coverage(&s, 40..60, 5).unwrap();
    for t in 40..60 {
        let traj = forecast(&ext, &s, t, 5).unwrap();
        assert_eq!(traj.horizon(), 5);
        for h in 1..=5 {
            let real = compute_features(&s, t + h).unwrap();
            for i in 0..2 {
                for k in 4..11 {
                    assert!((traj.states[h - 1].values[i][k] - real.values[i][k]).abs() < 1e-9);
                }
                assert!((traj.prices[h - 1][i] - s.close(i, t + h)).abs() < 1e-9);
            }
            let rel = s.relatives(t + h - 1);
            for i in 0..2 {
                assert!((traj.relatives()[h - 1][i] - rel[i]).abs() < 1e-12);
            }
        }
    }
    assert!(ext.check_coverage(&s, 40..61, 5).is_err());
}

#[test]
fn ridge_calibration_on_test_split_hits_targets() {
    let s = common::random_series(&[0.0005, 0.0, -0.0005], 0.015, 400, 7);
    let train = s.splits().range(Split::Train);
    let ridge = RidgeForecaster::fit(&s, train, 3, 1.0).unwrap();
    let test = s.splits().usable(Split::Test);
    let set = calibration_set(&ridge, &s, test, 3, 30).unwrap();
    let r0 = set.r_squared(&set.base).unwrap();
    for target in [0.1, 0.3, 0.8, 1.0] {
        if target < r0 {
            continue;
        }
        let (cal, out) = set.calibrate(target).unwrap();
        assert!((set.r_squared(&out).unwrap() - target).abs() < 1e-9);
        assert!((cal.achieved - target).abs() < 1e-9);
    }
}

#[test]
fn noise_calibration_ignores_post_training_bars() {
    let s = common::random_series(&[0.0005, 0.0], 0.015, 300, 8);
    let norm = common::train_normalizer(&s);
    let train = s.splits().range(Split::Train);
    let ridge = RidgeForecaster::fit(&s, train.clone(), 4, 1.0).unwrap();
    // forecast base days stop H days before the training split ends, so
    // imagined states never read past the split either
    let bases = 30..train.end - 4;
    let a = noise_stats(&ridge, &s, &norm, bases.clone(), 4).unwrap();
    let mut m = s.clone();
    for t in train.end..m.len() {
        let b = m.bar_mut(0, t);
        b.close *= 3.0;
        b.high *= 3.0;
        b.low *= 3.0;
        b.open *= 3.0;
        b.adj_close *= 3.0;
    }
    let b = noise_stats(&ridge, &m, &norm, bases, 4).unwrap();
    assert_eq!(a, b);
    assert!(a.variance.iter().all(|v| *v > 0.0));
}

fn random_set(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let realized: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let baseline: Vec<f64> = (0..n).map(|_| 0.1 * (rng.random::<f64>() - 0.5)).collect();
    let base: Vec<f64> = realized
        .iter()
        .zip(&baseline)
        .map(|(r, b)| b + 0.3 * (r - b) + 0.6 * (rng.random::<f64>() - 0.5))
        .collect();
    (base, realized, baseline)
}

proptest! {
    #[test]
    fn calibration_identity(seed in any::<u64>(), n in 2usize..200, u in 0.0f64..1.0) {
        let (base, realized, baseline) = random_set(seed, n);
        let r0 = r_squared(&base, &realized, &baseline).unwrap();
        let target = r0 + u * (1.0 - r0);
        let (cal, out) = calibrate_cheat(&base, &realized, &baseline, target).unwrap();
        prop_assert!((0.0..=1.0).contains(&cal.c));
        prop_assert!((r_squared(&out, &realized, &baseline).unwrap() - target).abs() < 1e-9);
    }

    #[test]
    fn blend_quality_increases_with_c(seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (base, realized, baseline) = random_set(seed, 50);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let r = |c: f64| r_squared(&blend(&base, &realized, c), &realized, &baseline).unwrap();
        prop_assert!(r(lo) < r(hi));
    }
}
