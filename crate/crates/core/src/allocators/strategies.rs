use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{equal_weight, mean_variance, min_variance, min_variance_vol_target, risk_parity, default_baseline, DEFAULT_LOOKBACK};
use crate::backtest::Strategy;
use crate::market::HistoryView;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocatorKind {
    EqualWeight,
    MeanVariance,
    RiskParity,
    MinVariance,
}

impl AllocatorKind {
    pub const ALL: [AllocatorKind; 4] = [Self::EqualWeight, Self::MeanVariance, Self::RiskParity, Self::MinVariance];

    pub fn name(self) -> &'static str {
        match self {
            Self::EqualWeight => "equal_weight",
            Self::MeanVariance => "mean_variance",
            Self::RiskParity => "risk_parity",
            Self::MinVariance => "min_variance",
        }
    }
}

impl fmt::Display for AllocatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AllocatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::arg(format!("unknown allocator '{s}'")))
    }
}

/// A classical allocator re-solved at every decision date from trailing moments.
///
/// With a cash asset in the universe the allocator runs on the risky assets and cash gets zero
/// weight, except under a volatility target where cash absorbs the scaled-down remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocatorStrategy {
    pub kind: AllocatorKind,
    pub lookback: usize,
    /// Mean-variance baseline return; `None` uses the cross-sectional mean of μ.
    pub baseline: Option<f64>,
    /// Daily volatility target for min-variance.
    pub vol_target: Option<f64>,
}

impl AllocatorStrategy {
    pub fn new(kind: AllocatorKind) -> Self {
        Self { kind, lookback: DEFAULT_LOOKBACK, baseline: None, vol_target: None }
    }
}

impl Strategy for AllocatorStrategy {
    fn name(&self) -> String {
        self.kind.name().to_string()
    }

    fn decide(&mut self, view: &HistoryView<'_>, _prev_rolled: &[f64]) -> Result<Vec<f64>> {
        let n = view.n_assets();
        let offset = usize::from(view.has_cash());
        if n == offset {
            return Err(Error::arg("no risky assets to allocate"));
        }
        let risky: Vec<usize> = (offset..n).collect();
        if self.kind == AllocatorKind::EqualWeight {
            return Ok(embed(n, offset, equal_weight::<f64>(risky.len())?.into_inner()));
        }
        let m = view.moments(self.lookback)?.select(&risky);
        let w = match self.kind {
            AllocatorKind::EqualWeight => unreachable!(),
            AllocatorKind::MeanVariance => mean_variance(&m, self.baseline.unwrap_or_else(|| default_baseline(&m)))?,
            AllocatorKind::RiskParity => risk_parity(&m)?,
            AllocatorKind::MinVariance => match self.vol_target {
                None => min_variance(&m)?,
                Some(_) if offset == 0 => return Err(Error::arg("a volatility target needs a cash asset")),
                Some(sigma) => return Ok(min_variance_vol_target(&m, sigma)?.into_inner()),
            },
        };
        Ok(embed(n, offset, w.into_inner()))
    }
}

fn embed(n: usize, offset: usize, w: Vec<f64>) -> Vec<f64> {
    let mut out = vec![0.0; offset];
    out.extend(w);
    debug_assert_eq!(out.len(), n);
    out
}
