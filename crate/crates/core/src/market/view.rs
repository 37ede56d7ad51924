use chrono::NaiveDate;

use super::{build_price_tensor, price_relatives, PriceSeries, PriceTensor, RelativeVector};
use crate::allocators::{estimate_moments, MomentEstimate};
use crate::{Error, Result};

/// Read-only window onto a series that exposes nothing after date index `now`.
///
/// Strategies only ever receive a view, which makes look-ahead impossible by construction.
#[derive(Debug, Clone, Copy)]
pub struct HistoryView<'a> {
    series: &'a PriceSeries,
    now: usize,
}

impl<'a> HistoryView<'a> {
    pub fn new(series: &'a PriceSeries, now: usize) -> Result<Self> {
        if now >= series.len() {
            return Err(Error::range(format!("view at {now} of series with {} dates", series.len())));
        }
        Ok(Self { series, now })
    }

    pub fn now(&self) -> usize {
        self.now
    }

    pub fn date(&self) -> NaiveDate {
        self.series.date(self.now)
    }

    pub fn n_assets(&self) -> usize {
        self.series.n_assets()
    }

    pub fn tickers(&self) -> &[String] {
        self.series.tickers()
    }

    pub fn has_cash(&self) -> bool {
        self.series.has_cash()
    }

    fn check(&self, t: usize) -> Result<()> {
        if t > self.now {
            return Err(Error::Contract(format!("look-ahead: date {t} requested at {}", self.now)));
        }
        Ok(())
    }

    pub fn close(&self, t: usize, asset: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.series.close(t, asset))
    }

    /// State tensor anchored at `now`.
    pub fn price_tensor(&self, window: usize) -> Result<PriceTensor> {
        build_price_tensor(self.series, self.now, window)
    }

    pub fn relatives(&self, t: usize) -> Result<RelativeVector> {
        self.check(t)?;
        price_relatives(self.series, t, false)
    }

    /// Return moments over the `lookback` returns ending at `now`.
    pub fn moments(&self, lookback: usize) -> Result<MomentEstimate<f64>> {
        estimate_moments(self.series, self.now, lookback)
    }
}
