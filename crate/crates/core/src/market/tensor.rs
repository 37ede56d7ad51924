use chrono::NaiveDate;

use super::PriceSeries;
use crate::{Error, Result};

/// Channels of the state tensor, in order: high, low, close.
pub const CHANNELS: usize = 3;

/// Normalized `(channel × asset × time)` window of high, low and close prices.
///
/// Every entry of asset `i` is divided by that asset's close at the anchor date, so the
/// last close column is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTensor {
    values: Vec<f64>,
    n_assets: usize,
    window: usize,
    anchor: usize,
    anchor_date: NaiveDate,
}

impl PriceTensor {
    /// Builds a tensor from raw `(3 × n_assets × window)` values.
    pub fn from_values(values: Vec<f64>, n_assets: usize, window: usize, anchor: usize, anchor_date: NaiveDate) -> Result<Self> {
        if values.len() != CHANNELS * n_assets * window {
            return Err(Error::arg(format!(
                "tensor data has {} values, expected 3 × {n_assets} × {window}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::arg("tensor entries must be positive"));
        }
        Ok(Self { values, n_assets, window, anchor, anchor_date })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> [usize; 3] {
        [CHANNELS, self.n_assets, self.window]
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Date index of the last column.
    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn anchor_date(&self) -> NaiveDate {
        self.anchor_date
    }

    pub fn get(&self, channel: usize, asset: usize, k: usize) -> f64 {
        self.values[(channel * self.n_assets + asset) * self.window + k]
    }

    /// Same tensor with the asset axis reordered: output asset `j` is input asset `perm[j]`.
    pub fn permute_assets(&self, perm: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for c in 0..CHANNELS {
            for &i in perm {
                let start = (c * self.n_assets + i) * self.window;
                values.extend_from_slice(&self.values[start..start + self.window]);
            }
        }
        Self { values, ..self.clone() }
    }
}

/// State tensor over dates `t − w + 1 ..= t`.
pub fn build_price_tensor(series: &PriceSeries, t: usize, w: usize) -> Result<PriceTensor> {
    if w == 0 {
        return Err(Error::arg("window must be positive"));
    }
    if t < w || t >= series.len() {
        return Err(Error::range(format!(
            "tensor at t={t} with window {w} needs {w} ≤ t < {}",
            series.len()
        )));
    }
    let n = series.n_assets();
    let first = t + 1 - w;
    let mut values = vec![0.0; CHANNELS * n * w];
    for i in 0..n {
        let anchor = series.close(t, i);
        for k in 0..w {
            let s = first + k;
            values[i * w + k] = series.high(s, i) / anchor;
            values[(n + i) * w + k] = series.low(s, i) / anchor;
            values[(2 * n + i) * w + k] = series.close(s, i) / anchor;
        }
        // Exact ones regardless of rounding in the division.
        values[(2 * n + i) * w + w - 1] = 1.0;
    }
    Ok(PriceTensor { values, n_assets: n, window: w, anchor: t, anchor_date: series.date(t) })
}

/// Gross one-period price relatives `close_t / close_{t−1}`, optionally led by a cash entry of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeVector {
    y: Vec<f64>,
    cash: bool,
}

impl RelativeVector {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.is_empty() || y.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::arg("price relatives must be positive and finite"));
        }
        Ok(Self { y, cash: false })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn has_cash(&self) -> bool {
        self.cash
    }
}

impl std::ops::Deref for RelativeVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.y
    }
}

pub fn price_relatives(series: &PriceSeries, t: usize, include_cash: bool) -> Result<RelativeVector> {
    if t == 0 || t >= series.len() {
        return Err(Error::range(format!("price relatives need 1 ≤ t < {}, got {t}", series.len())));
    }
    let prev = series.close_row(t - 1);
    let cur = series.close_row(t);
    let cash = include_cash && !series.has_cash();
    let mut y = Vec::with_capacity(cur.len() + cash as usize);
    if cash {
        y.push(1.0);
    }
    y.extend(cur.iter().zip(prev).map(|(c, p)| c / p));
    Ok(RelativeVector { y, cash: include_cash || series.has_cash() })
}
