use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Default proportional cost: five basis points per unit of traded weight.
pub const DEFAULT_COST_RATE: f64 = 0.0005;

/// Proportional transaction costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub mu_c: f64,
}

impl CostModel {
    pub fn new(mu_c: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&mu_c) {
            return Err(Error::arg(format!("cost rate must lie in [0, 1), got {mu_c}")));
        }
        Ok(Self { mu_c })
    }

    pub fn from_bps(bps: f64) -> Result<Self> {
        Self::new(bps / 1e4)
    }

    pub fn frictionless() -> Self {
        Self { mu_c: 0.0 }
    }
}

impl Default for CostModel {
    fn default() -> Self {
        Self { mu_c: DEFAULT_COST_RATE }
    }
}

/// Result of one value update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<T> {
    pub value: T,
    pub cost: T,
    /// `Σ|w − w_prev_rolled|`.
    pub turnover: T,
    /// `w·y`.
    pub gross: T,
}

/// Drifts `w` by one period of relatives: `w_i·y_i / (w·y)`. The all-zero position stays zero.
pub fn roll_weights<T: Scalar>(w: &[T], y: &[T]) -> Result<Vec<T>> {
    if w.len() != y.len() {
        return Err(Error::arg(format!("{} weights vs {} relatives", w.len(), y.len())));
    }
    if w.iter().all(|v| v.is_zero()) {
        return Ok(w.to_vec());
    }
    let growth: T = w.iter().zip(y).map(|(&a, &b)| a * b).sum();
    if !(growth > T::zero()) {
        return Err(Error::arg(format!("w·y = {growth} must be positive")));
    }
    Ok(w.iter().zip(y).map(|(&a, &b)| a * b / growth).collect())
}

/// `V' = V·[(w·y) − μ_c·Σ|w − w_prev_rolled|]`. A non-positive bracket is ruin.
pub fn portfolio_value_step<T: Scalar>(value: T, w: &[T], w_prev_rolled: &[T], y: &[T], cost: CostModel) -> Result<StepOutcome<T>> {
    if w.len() != y.len() || w_prev_rolled.len() != y.len() {
        return Err(Error::arg(format!("dimension mismatch: w {}, previous {}, y {}", w.len(), w_prev_rolled.len(), y.len())));
    }
    if !(value > T::zero()) {
        return Err(Error::arg(format!("portfolio value {value} must be positive")));
    }
    let gross: T = w.iter().zip(y).map(|(&a, &b)| a * b).sum();
    let turnover: T = w.iter().zip(w_prev_rolled).map(|(&a, &b)| (a - b).abs()).sum();
    let mu = T::of(cost.mu_c);
    let bracket = gross - mu * turnover;
    if !(bracket > T::zero()) {
        return Err(Error::Ruin { step: 0, bracket: bracket.as_f64() });
    }
    Ok(StepOutcome { value: value * bracket, cost: value * mu * turnover, turnover, gross })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rolling() {
        assert_eq!(roll_weights(&[0.3, 0.7], &[1.0, 1.0]).unwrap(), vec![0.3, 0.7]);
        let r = roll_weights(&[0.5f64, 0.5], &[1.1, 0.9]).unwrap();
        assert!((r[0] - 0.55).abs() < 1e-15 && (r[1] - 0.45).abs() < 1e-15);
        assert_eq!(roll_weights(&[0.0, 1.0, 0.0], &[3.0, 0.5, 2.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(roll_weights(&[0.0, 0.0], &[1.5, 0.5]).unwrap(), vec![0.0, 0.0]);
        assert!(roll_weights(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn value_updates() {
        let flat = portfolio_value_step(2.5, &[0.4, 0.6], &[0.4, 0.6], &[1.0, 1.0], CostModel::new(0.01).unwrap()).unwrap();
        assert_eq!(flat.value, 2.5);
        assert_eq!(flat.cost, 0.0);
        let swap = portfolio_value_step(1.0, &[1.0, 0.0], &[0.0, 1.0], &[1.02, 1.0], CostModel::default()).unwrap();
        assert_eq!(swap.turnover, 2.0);
        assert_eq!(swap.value, 1.02 - 0.001);
        let free = portfolio_value_step(3.0, &[0.5, 0.5], &[1.0, 0.0], &[1.1, 0.7], CostModel::frictionless()).unwrap();
        assert_eq!(free.value, 3.0 * (0.5 * 1.1 + 0.5 * 0.7));
    }

    #[test]
    fn ruin_and_bad_rates() {
        let r = portfolio_value_step(1.0, &[1.0, 0.0], &[0.0, 1.0], &[1e-4, 1.0], CostModel::new(0.5).unwrap());
        assert!(matches!(r, Err(Error::Ruin { .. })));
        assert!(CostModel::new(1.0).is_err());
        assert!(CostModel::new(-0.1).is_err());
        assert_eq!(CostModel::from_bps(5.0).unwrap().mu_c, 0.0005);
    }
}
