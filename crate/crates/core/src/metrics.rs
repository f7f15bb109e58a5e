//! Evaluation metrics over a portfolio value curve `V_0..V_T`.
//!
//! Per-period returns are `r_t = V_t / V_{t-1} - 1`. Sharpe uses the sample
//! standard deviation (`T - 1`), Sortino the population downside deviation
//! (`1 / T`). Ratios with a zero denominator are `None` rather than infinite.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("value curve needs at least 2 points, got {0}")]
    TooShort(usize),
    #[error("value curve entry {index} is {value}; values must be finite and > 0")]
    NonPositive { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueCurve {
    values: Vec<f64>,
}

impl ValueCurve {
    pub fn new(values: Vec<f64>) -> Result<Self, MetricsError> {
        if values.len() < 2 {
            return Err(MetricsError::TooShort(values.len()));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(MetricsError::NonPositive { index, value });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of periods `T`.
    pub fn periods(&self) -> usize {
        self.values.len() - 1
    }

    pub fn returns(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
    }
}

pub fn total_return(curve: &ValueCurve) -> f64 {
    let v = curve.values();
    (v[v.len() - 1] - v[0]) / v[0]
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// `None` when `T < 2` or returns have zero variance.
pub fn sharpe(curve: &ValueCurve) -> Option<f64> {
    let r = curve.returns();
    if r.len() < 2 {
        return None;
    }
    let m = mean(&r);
    let var = r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (r.len() - 1) as f64;
    let sd = var.sqrt();
    (sd > 0.0).then(|| TRADING_DAYS.sqrt() * m / sd)
}

/// `None` when no return is negative.
pub fn sortino(curve: &ValueCurve) -> Option<f64> {
    let r = curve.returns();
    let down = (r.iter().map(|x| x.min(0.0).powi(2)).sum::<f64>() / r.len() as f64).sqrt();
    (down > 0.0).then(|| TRADING_DAYS.sqrt() * mean(&r) / down)
}

/// Largest fractional decline from the running maximum, which starts at `V_0`.
pub fn max_drawdown(curve: &ValueCurve) -> f64 {
    let mut peak = f64::MIN;
    let mut worst = 0.0f64;
    for &v in curve.values() {
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    worst
}

/// `((1 + TR)^(252 / T) - 1) / MDD`; `None` when there is no drawdown.
pub fn calmar(curve: &ValueCurve) -> Option<f64> {
    let mdd = max_drawdown(curve);
    if mdd <= 0.0 {
        return None;
    }
    let annual = (1.0 + total_return(curve)).powf(TRADING_DAYS / curve.periods() as f64) - 1.0;
    let cr = annual / mdd;
    cr.is_finite().then_some(cr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub total_return: f64,
    pub sharpe: Option<f64>,
    pub sortino: Option<f64>,
    pub max_drawdown: f64,
    pub calmar: Option<f64>,
    /// Names of the metrics reported as `None`.
    pub undefined: Vec<String>,
}

impl MetricsReport {
    pub fn compute(curve: &ValueCurve) -> Self {
        let sharpe = sharpe(curve);
        let sortino = sortino(curve);
        let calmar = calmar(curve);
        let undefined = [("sharpe", sharpe), ("sortino", sortino), ("calmar", calmar)]
            .iter()
            .filter(|(_, v)| v.is_none())
            .map(|(n, _)| n.to_string())
            .collect();
        Self {
            total_return: total_return(curve),
            sharpe,
            sortino,
            max_drawdown: max_drawdown(curve),
            calmar,
            undefined,
        }
    }

    /// Values in the fixed order TR, Sharpe, Sortino, MDD, Calmar.
    pub fn values(&self) -> [Option<f64>; 5] {
        [
            Some(self.total_return),
            self.sharpe,
            self.sortino,
            Some(self.max_drawdown),
            self.calmar,
        ]
    }
}

pub const METRIC_NAMES: [&str; 5] = ["total_return", "sharpe", "sortino", "max_drawdown", "calmar"];

pub fn evaluate(values: &[f64]) -> Result<MetricsReport, MetricsError> {
    Ok(MetricsReport::compute(&ValueCurve::new(values.to_vec())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve_from_returns(r: &[f64]) -> ValueCurve {
        let mut v = vec![100.0];
        for x in r {
            v.push(v[v.len() - 1] * (1.0 + x));
        }
        ValueCurve::new(v).unwrap()
    }

    #[test]
    fn total_return_fixtures() {
        assert_eq!(total_return(&ValueCurve::new(vec![5.0; 4]).unwrap()), 0.0);
        assert!((total_return(&ValueCurve::new(vec![100.0, 120.0]).unwrap()) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn sharpe_fixtures() {
        let alt = curve_from_returns(&[0.01, -0.01, 0.01, -0.01]);
        assert!(sharpe(&alt).unwrap().abs() < 1e-3);
        // 100 -> 150 -> 225 -> 337.5 is exact in binary, so std is exactly 0
        assert!(sharpe(&curve_from_returns(&[0.5, 0.5, 0.5])).is_none());
        let s = sharpe(&curve_from_returns(&[0.01, 0.03])).unwrap();
        assert!((s - 252f64.sqrt() * 2f64.sqrt()).abs() < 1e-9, "{s}");
    }

    #[test]
    fn sortino_fixtures() {
        let s = sortino(&curve_from_returns(&[-0.01, 0.01])).unwrap();
        assert!(s.abs() < 1e-12);
        let s = sortino(&curve_from_returns(&[-0.01, -0.01, -0.01])).unwrap();
        assert!((s + 252f64.sqrt()).abs() < 1e-9);
        assert!(sortino(&curve_from_returns(&[0.01, 0.02])).is_none());
    }

    #[test]
    fn drawdown_fixtures() {
        let up = ValueCurve::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(max_drawdown(&up), 0.0);
        assert!(calmar(&up).is_none());
        let v = ValueCurve::new(vec![100.0, 120.0, 90.0, 110.0]).unwrap();
        assert!((max_drawdown(&v) - 0.25).abs() < 1e-15);
        let v = ValueCurve::new(vec![100.0, 50.0, 100.0]).unwrap();
        assert_eq!(max_drawdown(&v), 0.5);
    }

    #[test]
    fn calmar_one_year() {
        // 252 periods, TR = 0.2, MDD = 0.1
        let mut v = vec![100.0, 90.0];
        let g = (120.0f64 / 90.0).powf(1.0 / 251.0);
        for _ in 0..251 {
            v.push(v[v.len() - 1] * g);
        }
        let c = ValueCurve::new(v).unwrap();
        assert!((total_return(&c) - 0.2).abs() < 1e-12);
        assert!((calmar(&c).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn invalid_curves() {
        assert_eq!(ValueCurve::new(vec![1.0]), Err(MetricsError::TooShort(1)));
        assert!(ValueCurve::new(vec![1.0, 0.0]).is_err());
        assert!(ValueCurve::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn report_flags_undefined() {
        let r = evaluate(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(r.undefined, vec!["sharpe", "sortino", "calmar"]);
        assert!(serde_json::to_string(&r).unwrap().contains("\"sharpe\":null"));
    }
}
