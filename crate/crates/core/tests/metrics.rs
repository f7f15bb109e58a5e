use planfolio_core::metrics::{calmar, evaluate, max_drawdown, sharpe, sortino, total_return, ValueCurve};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Naive re-implementations written directly from the definitions.
fn oracle(v: &[f64]) -> [Option<f64>; 5] {
    let t = v.len() - 1;
    let mut r = Vec::new();
    for i in 1..=t {
        r.push((v[i] - v[i - 1]) / v[i - 1]);
    }
    let mut mean = 0.0;
    for x in &r {
        mean += x;
    }
    mean /= t as f64;
    let mut ss = 0.0;
    for x in &r {
        ss += (x - mean) * (x - mean);
    }
    let sd = if t >= 2 { (ss / (t as f64 - 1.0)).sqrt() } else { 0.0 };
    let sharpe = if sd > 0.0 { Some(mean / sd * 252f64.sqrt()) } else { None };
    let mut dd = 0.0;
    for x in &r {
        if *x < 0.0 {
            dd += x * x;
        }
    }
    let dd = (dd / t as f64).sqrt();
    let sortino = if dd > 0.0 { Some(mean / dd * 252f64.sqrt()) } else { None };
    let tr = (v[t] - v[0]) / v[0];
    let mut mdd = 0.0;
    for i in 0..=t {
        let mut peak = v[0];
        for j in 0..=i {
            if v[j] > peak {
                peak = v[j];
            }
        }
        let d = (peak - v[i]) / peak;
        if d > mdd {
            mdd = d;
        }
    }
    let calmar = if mdd > 0.0 { Some(((1.0 + tr).powf(252.0 / t as f64) - 1.0) / mdd) } else { None };
    [Some(tr), sharpe, sortino, Some(mdd), calmar]
}

fn random_curve(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = 2 + (rng.random::<u32>() % 300) as usize;
    let mut v = vec![10.0 + 1000.0 * rng.random::<f64>()];
    for _ in 1..len {
        let last = v[v.len() - 1];
        v.push(last * (1.0 + 0.04 * (rng.random::<f64>() - 0.48)));
    }
    v
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-12 * x.abs().max(1.0),
        _ => false,
    }
}

#[test]
fn metrics_match_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let v = random_curve(&mut rng);
        let got = evaluate(&v).unwrap().values();
        let want = oracle(&v);
        for k in 0..5 {
            assert!(close(got[k], want[k]), "metric {k}: {:?} vs {:?} on {v:?}", got[k], want[k]);
        }
    }
}

#[test]
fn hand_fixtures() {
    let c = ValueCurve::new(vec![100.0, 120.0, 90.0, 110.0]).unwrap();
    assert!((max_drawdown(&c) - 0.25).abs() < 1e-15);
    assert!((total_return(&c) - 0.1).abs() < 1e-15);
    assert!(sortino(&c).is_some() && sharpe(&c).is_some() && calmar(&c).is_some());
}

proptest! {
    #[test]
    fn scale_invariance(seed in any::<u64>(), k in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_curve(&mut rng);
        let w: Vec<f64> = v.iter().map(|x| x * k).collect();
        let a = evaluate(&v).unwrap().values();
        let b = evaluate(&w).unwrap().values();
        for i in 0..5 {
            prop_assert!(close(a[i], b[i]), "{:?} vs {:?}", a[i], b[i]);
        }
    }

    #[test]
    fn ranges_and_signs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_curve(&mut rng);
        let r = evaluate(&v).unwrap();
        prop_assert!((0.0..1.0).contains(&r.max_drawdown));
        prop_assert!(r.total_return > -1.0);
        let c = ValueCurve::new(v).unwrap();
        let m: f64 = c.returns().iter().sum();
        if let Some(s) = r.sharpe {
            prop_assert!(s == 0.0 || s.signum() == m.signum());
        }
    }
}
