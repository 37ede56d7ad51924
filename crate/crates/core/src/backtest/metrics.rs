use serde::{Deserialize, Serialize};

use super::BacktestResult;
use crate::{Error, Result};

pub const TRADING_DAYS: usize = 252;

/// Below this ratio of standard deviation to mean, daily log returns count as constant.
const CONSTANT_RETURN_RTOL: f64 = 1e-9;

/// Summary statistics in the units of the comparison table. `sharpe` is `None` when the
/// daily log returns have no variance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsBlock {
    /// Percent.
    pub total_return: f64,
    pub sharpe: Option<f64>,
    /// Percent.
    pub max_drawdown: f64,
    /// Percent of portfolio value traded per day.
    pub daily_turnover: f64,
}

pub fn compute_metrics(result: &BacktestResult, periods_per_year: usize) -> Result<MetricsBlock> {
    metrics_from_parts(&result.value_curve, &result.turnovers, periods_per_year)
}

/// Metrics from a raw value curve and per-period turnovers. The first turnover entry is the
/// initial allocation out of cash and is left out of the average.
pub fn metrics_from_parts(curve: &[f64], turnovers: &[f64], periods_per_year: usize) -> Result<MetricsBlock> {
    if curve.len() < 2 {
        return Err(Error::arg("metrics need at least two value points"));
    }
    if let Some(v) = curve.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::arg(format!("value curve contains {v}")));
    }
    let total_return = 100.0 * (curve[curve.len() - 1] / curve[0] - 1.0);
    let logs: Vec<f64> = curve.windows(2).map(|p| (p[1] / p[0]).ln()).collect();
    let sharpe = sharpe_ratio(&logs, periods_per_year);
    let mut peak = curve[0];
    let mut worst: f64 = 0.0;
    for &v in curve {
        peak = peak.max(v);
        worst = worst.max(1.0 - v / peak);
    }
    let traded = turnovers.get(1..).unwrap_or(&[]);
    let daily_turnover = if traded.is_empty() { 0.0 } else { 100.0 * traded.iter().sum::<f64>() / traded.len() as f64 };
    Ok(MetricsBlock { total_return, sharpe, max_drawdown: 100.0 * worst, daily_turnover })
}

fn sharpe_ratio(logs: &[f64], periods_per_year: usize) -> Option<f64> {
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd <= CONSTANT_RETURN_RTOL * mean.abs() || sd == 0.0 {
        return None;
    }
    Some(mean / sd * (periods_per_year as f64).sqrt())
}

/// Average log return `(1/T)·ln(V_T/V_0)` over the `T` periods of the run.
pub fn reward(result: &BacktestResult) -> f64 {
    reward_from_curve(&result.value_curve)
}

pub fn reward_from_curve(curve: &[f64]) -> f64 {
    let t = curve.len().saturating_sub(1);
    if t == 0 {
        return 0.0;
    }
    (curve[t] / curve[0]).ln() / t as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drawdown_of_hand_curve() {
        let m = metrics_from_parts(&[1.0, 1.2, 0.9, 1.1], &[], 252).unwrap();
        assert_eq!(m.max_drawdown, 25.0);
        assert!((m.total_return - 10.0).abs() < 1e-12);
    }

    #[test]
    fn constant_growth_has_no_sharpe() {
        let curve: Vec<f64> = (0..300).map(|k| (0.001 * k as f64).exp()).collect();
        assert_eq!(metrics_from_parts(&curve, &[], 252).unwrap().sharpe, None);
        assert_eq!(metrics_from_parts(&[1.0; 10], &[], 252).unwrap().sharpe, None);
    }

    #[test]
    fn e_over_t_days() {
        let t = 8;
        let curve: Vec<f64> = (0..=t).map(|k| if k == t { std::f64::consts::E } else { 1.0 + 0.1 * (k % 3) as f64 }).collect();
        let m = metrics_from_parts(&curve, &[], 252).unwrap();
        assert!((m.total_return - 100.0 * (std::f64::consts::E - 1.0)).abs() < 1e-12);
        assert!((reward_from_curve(&curve) - 1.0 / t as f64).abs() < 1e-15);
        let doubled: Vec<f64> = (0..=10).map(|k| 2f64.powf(k as f64 / 10.0)).collect();
        assert!((reward_from_curve(&doubled) - 2f64.ln() / 10.0).abs() < 1e-15);
    }

    #[test]
    fn turnover_skips_initial_allocation() {
        let m = metrics_from_parts(&[1.0, 1.0, 1.0], &[1.0, 0.0], 252).unwrap();
        assert_eq!(m.daily_turnover, 0.0);
        let m = metrics_from_parts(&[1.0, 1.0, 1.0, 1.0], &[1.0, 0.2, 0.4], 252).unwrap();
        assert!((m.daily_turnover - 30.0).abs() < 1e-12);
    }
}
