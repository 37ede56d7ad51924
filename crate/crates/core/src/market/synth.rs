use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::PriceSeries;
use crate::linalg::{cholesky, is_symmetric};
use crate::{Error, Result};

/// Parameters of a correlated geometric Brownian motion market.
///
/// `drift` and `vol` are the per-asset mean and standard deviation of daily log returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_assets: usize,
    pub length: usize,
    pub drift: Vec<f64>,
    pub vol: Vec<f64>,
    /// Row-major correlation matrix; identity when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr: Option<Vec<f64>>,
    pub seed: u64,
    #[serde(default = "default_start_price")]
    pub start_price: f64,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
}

fn default_start_price() -> f64 {
    100.0
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2008, 1, 2).expect("valid date")
}

impl SynthSpec {
    /// Independent assets sharing one drift and volatility.
    pub fn uniform(n_assets: usize, length: usize, drift: f64, vol: f64, seed: u64) -> Self {
        Self {
            n_assets,
            length,
            drift: vec![drift; n_assets],
            vol: vec![vol; n_assets],
            corr: None,
            seed,
            start_price: default_start_price(),
            start_date: default_start_date(),
        }
    }
}

fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Simulates `spec.length` daily bars.
///
/// `log close_t = log close_0 + drift·t + vol·Σ z`, with `z` correlated through the Cholesky
/// factor of `corr`. Highs and lows sit a half-normal distance of `vol / 2` in log space above
/// and below the close; the open is the previous close clipped into the bar.
pub fn synth_gbm(spec: &SynthSpec) -> Result<PriceSeries> {
    let n = spec.n_assets;
    if n == 0 || spec.length == 0 {
        return Err(Error::arg("synthetic market needs assets and dates"));
    }
    if spec.drift.len() != n || spec.vol.len() != n {
        return Err(Error::arg("drift and vol need one entry per asset"));
    }
    if spec.vol.iter().any(|v| !(*v >= 0.0)) || spec.drift.iter().any(|d| !d.is_finite()) {
        return Err(Error::arg("vol must be non-negative and drift finite"));
    }
    if !(spec.start_price > 0.0) {
        return Err(Error::arg("start price must be positive"));
    }
    let corr = match &spec.corr {
        Some(c) => c.clone(),
        None => (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect(),
    };
    if corr.len() != n * n || !is_symmetric(&corr, n, 1e-12) || (0..n).any(|i| (corr[i * n + i] - 1.0).abs() > 1e-12) {
        return Err(Error::arg("correlation must be a symmetric n×n matrix with unit diagonal"));
    }
    let chol = cholesky(&corr, n, 1e-10).ok_or_else(|| Error::arg("correlation matrix is not positive semi-definite"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let cells = spec.length * n;
    let (mut open, mut high, mut low, mut close) =
        (vec![0.0; cells], vec![0.0; cells], vec![0.0; cells], vec![0.0; cells]);
    let mut shock_sum = vec![0.0; n];
    for t in 0..spec.length {
        if t > 0 {
            let e: Vec<f64> = (0..n).map(|_| gauss()).collect();
            for i in 0..n {
                shock_sum[i] += (0..=i).map(|k| chol[i * n + k] * e[k]).sum::<f64>();
            }
        }
        for i in 0..n {
            let k = t * n + i;
            let c = spec.start_price * (spec.drift[i] * t as f64 + spec.vol[i] * shock_sum[i]).exp();
            let spread = 0.5 * spec.vol[i];
            let h = c * (spread * gauss().abs()).exp();
            let l = c * (-spread * gauss().abs()).exp();
            let o = if t == 0 { c } else { close[k - n] };
            (open[k], high[k], low[k], close[k]) = (o.clamp(l, h), h, l, c);
        }
    }
    let tickers = (0..n).map(|i| format!("SYN{i}")).collect();
    PriceSeries::new(tickers, business_days(spec.start_date, spec.length), open, high, low, close)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_vol_is_deterministic_exponential() {
        let spec = SynthSpec::uniform(2, 30, 0.003, 0.0, 1);
        let s = synth_gbm(&spec).unwrap();
        for t in 0..30 {
            assert_eq!(s.close(t, 1), 100.0 * (0.003 * t as f64).exp());
            assert_eq!(s.high(t, 0), s.low(t, 0));
        }
    }

    #[test]
    fn same_seed_same_series() {
        let spec = SynthSpec::uniform(3, 200, 0.0005, 0.01, 42);
        assert_eq!(synth_gbm(&spec).unwrap(), synth_gbm(&spec).unwrap());
        let other = SynthSpec { seed: 43, ..spec.clone() };
        assert_ne!(synth_gbm(&other).unwrap(), synth_gbm(&spec).unwrap());
    }

    #[test]
    fn rejects_non_psd_correlation() {
        let mut spec = SynthSpec::uniform(3, 10, 0.0, 0.01, 1);
        spec.corr = Some(vec![1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        assert!(matches!(synth_gbm(&spec), Err(Error::Argument(_))));
        spec.corr = Some(vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(synth_gbm(&spec).is_ok());
    }

    #[test]
    fn log_return_moments_match() {
        // Standard error of the mean is vol/√T, about 1% of the drift here.
        let spec = SynthSpec {
            drift: vec![0.01, -0.02],
            vol: vec![0.01, 0.03],
            ..SynthSpec::uniform(2, 20_000, 0.0, 0.0, 7)
        };
        let s = synth_gbm(&spec).unwrap();
        for i in 0..2 {
            let r: Vec<f64> = (1..s.len()).map(|t| (s.close(t, i) / s.close(t - 1, i)).ln()).collect();
            let m = r.iter().sum::<f64>() / r.len() as f64;
            let v = r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (r.len() - 1) as f64;
            assert!((m / spec.drift[i] - 1.0).abs() < 0.05, "mean {m}");
            assert!((v.sqrt() / spec.vol[i] - 1.0).abs() < 0.05, "vol {}", v.sqrt());
        }
    }

    #[test]
    fn correlation_is_realised() {
        let mut spec = SynthSpec::uniform(2, 20_000, 0.0, 0.01, 3);
        spec.corr = Some(vec![1.0, 0.6, 0.6, 1.0]);
        let s = synth_gbm(&spec).unwrap();
        let r = |i: usize| -> Vec<f64> { (1..s.len()).map(|t| (s.close(t, i) / s.close(t - 1, i)).ln()).collect() };
        let (a, b) = (r(0), r(1));
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        assert!((cov / (va * vb).sqrt() - 0.6).abs() < 0.03);
    }
}
