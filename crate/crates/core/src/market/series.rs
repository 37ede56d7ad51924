use chrono::NaiveDate;

use crate::{Error, Result};

/// Ticker assigned to the synthetic constant-price cash asset.
pub const CASH_TICKER: &str = "CASH";

/// Calendar-aligned OHLC history, stored row-major as `dates × assets`.
///
/// Immutable once built: every constructor validates positivity, bar consistency
/// (`low ≤ open, close ≤ high`) and strictly increasing dates.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    open: Vec<f64>,
    high: Vec<f64>,
    low: Vec<f64>,
    close: Vec<f64>,
    warmup: usize,
    has_cash: bool,
}

impl PriceSeries {
    pub fn new(
        tickers: Vec<String>,
        dates: Vec<NaiveDate>,
        open: Vec<f64>,
        high: Vec<f64>,
        low: Vec<f64>,
        close: Vec<f64>,
    ) -> Result<Self> {
        let n = tickers.len();
        let cells = dates.len() * n;
        if n == 0 || dates.is_empty() {
            return Err(Error::Data("series needs at least one asset and one date".into()));
        }
        for (name, arr) in [("open", &open), ("high", &high), ("low", &low), ("close", &close)] {
            if arr.len() != cells {
                return Err(Error::arg(format!(
                    "{name} has {} values, expected {} dates × {} assets",
                    arr.len(),
                    dates.len(),
                    n
                )));
            }
        }
        if let Some(w) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Data(format!("dates not strictly increasing at {}", dates[w + 1])));
        }
        for k in 0..cells {
            let (o, h, l, c) = (open[k], high[k], low[k], close[k]);
            let (t, i) = (k / n, k % n);
            let bad = |what: &str| {
                Err(Error::Data(format!("{} on {} ({}): {what}", tickers[i], dates[t], [o, h, l, c].map(|v| v.to_string()).join(","))))
            };
            if !(o > 0.0 && h > 0.0 && l > 0.0 && c > 0.0) || !(o.is_finite() && h.is_finite() && c.is_finite()) {
                return bad("prices must be positive and finite");
            }
            if l > h {
                return bad("low exceeds high");
            }
            if !(l <= o && o <= h && l <= c && c <= h) {
                return bad("open/close outside [low, high]");
            }
        }
        Ok(Self { tickers, dates, open, high, low, close, warmup: 0, has_cash: false })
    }

    /// Series whose bars are flat at the close (`open = high = low = close`).
    pub fn from_closes(tickers: Vec<String>, dates: Vec<NaiveDate>, close: Vec<f64>) -> Result<Self> {
        Self::new(tickers, dates, close.clone(), close.clone(), close.clone(), close)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn date(&self, t: usize) -> NaiveDate {
        self.dates[t]
    }

    /// Leading rows that provide history only and are not traded.
    pub fn warmup(&self) -> usize {
        self.warmup
    }

    /// Whether asset 0 is the constant-price cash asset.
    pub fn has_cash(&self) -> bool {
        self.has_cash
    }

    pub fn open(&self, t: usize, i: usize) -> f64 {
        self.open[t * self.n_assets() + i]
    }

    pub fn high(&self, t: usize, i: usize) -> f64 {
        self.high[t * self.n_assets() + i]
    }

    pub fn low(&self, t: usize, i: usize) -> f64 {
        self.low[t * self.n_assets() + i]
    }

    pub fn close(&self, t: usize, i: usize) -> f64 {
        self.close[t * self.n_assets() + i]
    }

    pub fn close_row(&self, t: usize) -> &[f64] {
        let n = self.n_assets();
        &self.close[t * n..(t + 1) * n]
    }

    /// Raw `(open, high, low, close)` arrays, row-major `dates × assets`.
    pub fn arrays(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        (&self.open, &self.high, &self.low, &self.close)
    }

    /// Rows `range` as a new series without warm-up.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::range(format!("slice {range:?} of series with {} dates", self.len())));
        }
        let n = self.n_assets();
        let cells = range.start * n..range.end * n;
        Ok(Self {
            tickers: self.tickers.clone(),
            dates: self.dates[range].to_vec(),
            open: self.open[cells.clone()].to_vec(),
            high: self.high[cells.clone()].to_vec(),
            low: self.low[cells.clone()].to_vec(),
            close: self.close[cells].to_vec(),
            warmup: 0,
            has_cash: self.has_cash,
        })
    }

    /// Returns a copy flagged with `warmup` leading context rows.
    pub fn with_warmup(mut self, warmup: usize) -> Result<Self> {
        if warmup >= self.len() {
            return Err(Error::arg(format!("warm-up {warmup} leaves no tradable dates of {}", self.len())));
        }
        self.warmup = warmup;
        Ok(self)
    }

    /// Keeps only the named assets, in the given order.
    pub fn select(&self, tickers: &[String]) -> Result<Self> {
        let idx = tickers
            .iter()
            .map(|t| {
                self.tickers
                    .iter()
                    .position(|s| s == t)
                    .ok_or_else(|| Error::arg(format!("unknown ticker `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let pick = |arr: &[f64]| -> Vec<f64> {
            (0..self.len()).flat_map(|t| idx.iter().map(move |&i| (t, i))).map(|(t, i)| arr[t * self.n_assets() + i]).collect()
        };
        Ok(Self {
            tickers: tickers.to_vec(),
            dates: self.dates.clone(),
            open: pick(&self.open),
            high: pick(&self.high),
            low: pick(&self.low),
            close: pick(&self.close),
            warmup: self.warmup,
            has_cash: self.has_cash && idx.first() == Some(&0),
        })
    }

    /// Prepends a constant-price cash asset (all prices 1). No-op if already present.
    pub fn with_cash(&self) -> Self {
        if self.has_cash {
            return self.clone();
        }
        let n = self.n_assets();
        let widen = |arr: &[f64]| -> Vec<f64> {
            arr.chunks(n).flat_map(|row| std::iter::once(1.0).chain(row.iter().copied())).collect()
        };
        let mut tickers = vec![CASH_TICKER.to_string()];
        tickers.extend(self.tickers.iter().cloned());
        Self {
            tickers,
            dates: self.dates.clone(),
            open: widen(&self.open),
            high: widen(&self.high),
            low: widen(&self.low),
            close: widen(&self.close),
            warmup: self.warmup,
            has_cash: true,
        }
    }

    /// Rescales every bar strictly after date `t` of asset `i` by `factor(t', i)`.
    ///
    /// Used to build counterfactual futures when auditing causality.
    pub fn perturb_after(&self, t: usize, mut factor: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let n = self.n_assets();
        let (mut o, mut h, mut l, mut c) = (self.open.clone(), self.high.clone(), self.low.clone(), self.close.clone());
        for s in t + 1..self.len() {
            for i in 0..n {
                if self.has_cash && i == 0 {
                    continue;
                }
                let f = factor(s, i);
                let k = s * n + i;
                o[k] *= f;
                h[k] *= f;
                l[k] *= f;
                c[k] *= f;
            }
        }
        let mut out = Self::new(self.tickers.clone(), self.dates.clone(), o, h, l, c)?;
        out.warmup = self.warmup;
        out.has_cash = self.has_cash;
        Ok(out)
    }

    /// Appends `other`'s dates after this series' dates.
    pub fn concat(&self, other: &PriceSeries) -> Result<Self> {
        if self.tickers != other.tickers {
            return Err(Error::arg("cannot concatenate series with different assets"));
        }
        let cat = |a: &[f64], b: &[f64]| [a, b].concat();
        let mut out = Self::new(
            self.tickers.clone(),
            [self.dates.as_slice(), other.dates.as_slice()].concat(),
            cat(&self.open, &other.open),
            cat(&self.high, &other.high),
            cat(&self.low, &other.low),
            cat(&self.close, &other.close),
        )?;
        out.warmup = self.warmup;
        out.has_cash = self.has_cash;
        Ok(out)
    }
}

/// Chronological split at `floor(T · fraction)`.
///
/// The test series is prefixed with the final `warmup` train dates (or all of them when
/// the train segment is shorter) and flagged so those rows are used as history only.
pub fn split_train_test(series: &PriceSeries, fraction: f64, warmup: usize) -> Result<(PriceSeries, PriceSeries)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::arg(format!("train fraction {fraction} outside (0, 1)")));
    }
    let total = series.len();
    if total < 2 {
        return Err(Error::arg("need at least two dates to split"));
    }
    let cut = (total as f64 * fraction).floor() as usize;
    if cut == 0 || cut == total {
        return Err(Error::arg(format!("fraction {fraction} of {total} dates leaves an empty segment")));
    }
    let train = series.slice(0..cut)?;
    let context = warmup.min(cut);
    let test = series.slice(cut - context..total)?.with_warmup(context)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (0..n).map(|k| d0 + chrono::Days::new(k as u64)).collect()
    }

    fn ramp(t_len: usize) -> PriceSeries {
        let close: Vec<f64> = (0..t_len).flat_map(|t| [100.0 + t as f64, 50.0 + 0.5 * t as f64]).collect();
        PriceSeries::from_closes(vec!["A".into(), "B".into()], dates(t_len), close).unwrap()
    }

    #[test]
    fn split_sizes() {
        let s = ramp(100);
        let (train, test) = split_train_test(&s, 0.75, 0).unwrap();
        assert_eq!((train.len(), test.len()), (75, 25));

        let (train, test) = split_train_test(&ramp(4), 0.75, 0).unwrap();
        assert_eq!((train.len(), test.len()), (3, 1));

        assert!(matches!(split_train_test(&s, 1.0, 0), Err(Error::Argument(_))));
        assert!(matches!(split_train_test(&s, 0.0, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn split_keeps_warmup_context() {
        let s = ramp(100);
        let (train, test) = split_train_test(&s, 0.75, 10).unwrap();
        assert_eq!(test.warmup(), 10);
        assert_eq!(test.len() - test.warmup(), 25);
        assert_eq!(test.date(0), train.date(65));
        let traded = test.slice(test.warmup()..test.len()).unwrap();
        assert_eq!(train.concat(&traded).unwrap(), s);
    }

    #[test]
    fn rejects_inconsistent_bars() {
        let d = dates(1);
        let bad = PriceSeries::new(vec!["A".into()], d.clone(), vec![1.0], vec![1.0], vec![2.0], vec![1.0]);
        assert!(bad.is_err());
        let neg = PriceSeries::from_closes(vec!["A".into()], d, vec![-3.0]);
        assert!(neg.is_err());
    }

    #[test]
    fn cash_is_prepended_once() {
        let s = ramp(3).with_cash();
        assert!(s.has_cash());
        assert_eq!(s.tickers()[0], CASH_TICKER);
        assert_eq!(s.close_row(2), &[1.0, 102.0, 51.0]);
        assert_eq!(s.with_cash().n_assets(), 3);
    }

    #[test]
    fn select_reorders_assets() {
        let s = ramp(3).select(&["B".into(), "A".into()]).unwrap();
        assert_eq!(s.close_row(1), &[50.5, 101.0]);
        assert!(ramp(3).select(&["Z".into()]).is_err());
    }
}
