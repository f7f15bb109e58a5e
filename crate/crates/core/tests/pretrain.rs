mod common;

use planfolio_core::env::{run_episode, EnvConfig};
use planfolio_core::marketdata::Split;
use planfolio_core::policy::{pretrain, ActMode, PolicyConfig, PolicyParams, PretrainAlgo, PretrainConfig};

fn setup(algo: PretrainAlgo) -> (PolicyParams, PretrainConfig) {
    let params = PolicyParams::new(PolicyConfig {
        hidden: vec![16, 16],
        mode: algo.policy_mode(),
        init_seed: 1,
        ..PolicyConfig::for_assets(2)
    })
    .unwrap();
    let config = PretrainConfig {
        algo,
        epochs: 3,
        learning_rate: 1e-3,
        ..PretrainConfig::default()
    };
    (params, config)
}

#[test]
fn pretraining_never_degrades_train_reward() {
    let s = common::random_series(&[0.001, -0.0005], 0.015, 300, 3);
    let norm = common::train_normalizer(&s);
    let train = s.splits().usable(Split::Train);
    let env = EnvConfig::default();
    for algo in [PretrainAlgo::StochasticAc, PretrainAlgo::DeterministicAc] {
        let (init, config) = setup(algo);
        let (trained, report) = pretrain(&s, &norm, train.clone(), &init, &env, &config, 7).unwrap();
        assert_eq!(report.epoch_rewards.len(), 3);
        let before = run_episode(&s, &norm, train.clone(), &init, ActMode::Deterministic, 0, &env).unwrap();
        let after = run_episode(&s, &norm, train.clone(), &trained, ActMode::Deterministic, 0, &env).unwrap();
        assert!(after.total_reward() >= before.total_reward());
        assert_eq!(after.total_reward(), report.final_reward);
    }
}

#[test]
fn pretraining_reads_only_its_range() {
    let s = common::random_series(&[0.001, -0.0005], 0.015, 300, 4);
    let norm = common::train_normalizer(&s);
    let train = s.splits().usable(Split::Train);
    let mut m = s.clone();
    for t in train.end..m.len() {
        m.bar_mut(1, t).close *= 1.5;
        m.bar_mut(1, t).high *= 1.5;
        m.bar_mut(1, t).open *= 1.5;
        m.bar_mut(1, t).low *= 1.5;
        m.bar_mut(1, t).adj_close *= 1.5;
    }
    let env = EnvConfig::default();
    let (init, config) = setup(PretrainAlgo::StochasticAc);
    let a = pretrain(&s, &norm, train.clone(), &init, &env, &config, 2).unwrap();
    let b = pretrain(&m, &norm, train, &init, &env, &config, 2).unwrap();
    assert_eq!(a.0, b.0);
}

#[test]
fn mode_mismatch_is_rejected() {
    let s = common::random_series(&[0.0], 0.01, 120, 1);
    let norm = common::train_normalizer(&s);
    let (init, mut config) = setup(PretrainAlgo::StochasticAc);
    config.algo = PretrainAlgo::DeterministicAc;
    let r = pretrain(&s, &norm, 30..70, &init, &EnvConfig::default(), &config, 0);
    assert!(r.is_err());
}
