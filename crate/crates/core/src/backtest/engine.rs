use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::cost::{portfolio_value_step, roll_weights, CostModel};
use super::metrics::{compute_metrics, MetricsBlock, TRADING_DAYS};
use crate::agents::WeightVector;
use crate::market::{price_relatives, HistoryView, PriceSeries};
use crate::{Error, Result};

/// An allocation rule. It sees the market only through a [`HistoryView`] ending at the
/// decision date, plus the position it currently holds after drift.
pub trait Strategy {
    fn name(&self) -> String;

    /// Target weights at the close of `view.now()`.
    fn decide(&mut self, view: &HistoryView<'_>, prev_rolled: &[f64]) -> Result<Vec<f64>>;
}

/// Adapts a closure into a [`Strategy`].
pub struct FnStrategy<F> {
    name: String,
    f: F,
}

impl<F> FnStrategy<F>
where
    F: FnMut(&HistoryView<'_>, &[f64]) -> Result<Vec<f64>>,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> Strategy for FnStrategy<F>
where
    F: FnMut(&HistoryView<'_>, &[f64]) -> Result<Vec<f64>>,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn decide(&mut self, view: &HistoryView<'_>, prev_rolled: &[f64]) -> Result<Vec<f64>> {
        (self.f)(view, prev_rolled)
    }
}

/// Per-period record of a simulation. Entry `k` covers the decision at `dates[k]` and the
/// holding period that ends at the next date; `value_curve` has one more point than `dates`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub strategy: String,
    pub tickers: Vec<String>,
    pub cost_rate: f64,
    pub dates: Vec<NaiveDate>,
    pub end_date: NaiveDate,
    pub value_curve: Vec<f64>,
    pub weights: Vec<WeightVector<f64>>,
    /// Position held going into each decision (the previous weights after drift).
    pub rolled_weights: Vec<Vec<f64>>,
    pub relatives: Vec<Vec<f64>>,
    pub period_costs: Vec<f64>,
    pub turnovers: Vec<f64>,
    pub metrics: MetricsBlock,
}

impl BacktestResult {
    pub fn periods(&self) -> usize {
        self.dates.len()
    }

    pub fn final_value(&self) -> f64 {
        *self.value_curve.last().expect("value curve is never empty")
    }

    /// Mean weight per asset over the run.
    pub fn mean_weights(&self) -> Vec<f64> {
        let k = self.weights.len() as f64;
        (0..self.tickers.len()).map(|i| self.weights.iter().map(|w| w[i]).sum::<f64>() / k).collect()
    }
}

/// Simulates `strategy` on every tradable date: from `max(window, warmup)` to the second-last
/// date. Starts from an all-cash position with value 1.
pub fn run_backtest(strategy: &mut dyn Strategy, series: &PriceSeries, cost: CostModel, window: usize) -> Result<BacktestResult> {
    let start = window.max(series.warmup());
    if start + 1 >= series.len() {
        return Err(Error::arg(format!("series of {} dates leaves nothing to trade after {start}", series.len())));
    }
    let n = series.n_assets();
    let mut prev_rolled = if series.has_cash() { WeightVector::<f64>::one_hot(n, 0).into_inner() } else { vec![0.0; n] };
    let periods = series.len() - 1 - start;
    let mut out = BacktestResult {
        strategy: strategy.name(),
        tickers: series.tickers().to_vec(),
        cost_rate: cost.mu_c,
        dates: Vec::with_capacity(periods),
        end_date: series.date(series.len() - 1),
        value_curve: Vec::with_capacity(periods + 1),
        weights: Vec::with_capacity(periods),
        rolled_weights: Vec::with_capacity(periods),
        relatives: Vec::with_capacity(periods),
        period_costs: Vec::with_capacity(periods),
        turnovers: Vec::with_capacity(periods),
        metrics: MetricsBlock::default(),
    };
    let mut value = 1.0;
    out.value_curve.push(value);
    for t in start..series.len() - 1 {
        let view = HistoryView::new(series, t)?;
        let raw = strategy.decide(&view, &prev_rolled)?;
        if raw.len() != n {
            return Err(Error::Contract(format!("{} returned {} weights for {n} assets at t={t} ({})", out.strategy, raw.len(), series.date(t))));
        }
        let w = WeightVector::new(raw).map_err(|e| Error::Contract(format!("{} emitted invalid weights at t={t} ({}): {e}", out.strategy, series.date(t))))?;
        let y = price_relatives(series, t + 1, false)?;
        let step = portfolio_value_step(value, &w, &prev_rolled, &y, cost).map_err(|e| match e {
            Error::Ruin { bracket, .. } => Error::Ruin { step: t, bracket },
            other => other,
        })?;
        let rolled = roll_weights(&w, &y)?;
        value = step.value;
        out.dates.push(series.date(t));
        out.value_curve.push(value);
        out.rolled_weights.push(std::mem::replace(&mut prev_rolled, rolled));
        out.weights.push(w);
        out.relatives.push(y.as_slice().to_vec());
        out.period_costs.push(step.cost);
        out.turnovers.push(step.turnover);
    }
    out.metrics = compute_metrics(&out, TRADING_DAYS)?;
    Ok(out)
}
