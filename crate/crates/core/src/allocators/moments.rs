use crate::linalg::{is_symmetric, symmetric_eigenvalues};
use crate::market::PriceSeries;
use crate::{Error, Result, Scalar};

/// Diagonal loading added to every sample covariance.
pub const COVARIANCE_JITTER: f64 = 1e-8;
/// Lookback used by the classical allocators, matching the RL state window.
pub const DEFAULT_LOOKBACK: usize = 50;

/// Sample mean and covariance of simple daily returns over a lookback window.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate<T> {
    pub mu: Vec<T>,
    /// Row-major `n × n`, jitter included.
    pub omega: Vec<T>,
    pub jitter: T,
    pub lookback: usize,
}

impl<T: Scalar> MomentEstimate<T> {
    /// Builds an estimate from given moments (no jitter is added).
    pub fn new(mu: Vec<T>, omega: Vec<T>) -> Result<Self> {
        let n = mu.len();
        if n == 0 || omega.len() != n * n {
            return Err(Error::arg(format!("{n} means need an {n}×{n} covariance")));
        }
        let scale = omega.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if !is_symmetric(&omega, n, T::of(1e-12) * scale.max(T::one())) {
            return Err(Error::arg("covariance must be symmetric"));
        }
        Ok(Self { mu, omega, jitter: T::zero(), lookback: 0 })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn cov(&self, i: usize, j: usize) -> T {
        self.omega[i * self.n() + j]
    }

    /// Covariance without the diagonal loading.
    pub fn covariance_pre_jitter(&self) -> Vec<T> {
        let n = self.n();
        let mut c = self.omega.clone();
        for i in 0..n {
            c[i * n + i] -= self.jitter;
        }
        c
    }

    /// Restriction to the given assets.
    pub fn select(&self, idx: &[usize]) -> Self {
        let n = self.n();
        Self {
            mu: idx.iter().map(|&i| self.mu[i]).collect(),
            omega: idx.iter().flat_map(|&i| idx.iter().map(move |&j| (i, j))).map(|(i, j)| self.omega[i * n + j]).collect(),
            jitter: self.jitter,
            lookback: self.lookback,
        }
    }

    /// Same estimate with the covariance multiplied by `c`.
    pub fn scaled(&self, c: T) -> Self {
        Self { omega: self.omega.iter().map(|&v| v * c).collect(), jitter: self.jitter * c, ..self.clone() }
    }

    pub fn min_eigenvalue(&self) -> T {
        symmetric_eigenvalues(&self.omega, self.n())[0]
    }
}

/// Moments of the `lookback` simple returns ending at date `t`; covariance uses the `n − 1`
/// divisor and is accumulated with Welford updates.
pub fn estimate_moments<T: Scalar>(series: &PriceSeries, t: usize, lookback: usize) -> Result<MomentEstimate<T>> {
    if lookback < 2 {
        return Err(Error::arg("lookback must cover at least two returns"));
    }
    if t < lookback || t >= series.len() {
        return Err(Error::range(format!("moments at t={t} with lookback {lookback} need {lookback} ≤ t < {}", series.len())));
    }
    let n = series.n_assets();
    let mut mean = vec![T::zero(); n];
    let mut comoment = vec![T::zero(); n * n];
    for (k, s) in (t + 1 - lookback..=t).enumerate() {
        let r: Vec<T> = (0..n).map(|i| T::of(series.close(s, i) / series.close(s - 1, i) - 1.0)).collect();
        let count = T::of((k + 1) as f64);
        let delta: Vec<T> = r.iter().zip(&mean).map(|(&x, &m)| x - m).collect();
        for (m, d) in mean.iter_mut().zip(&delta) {
            *m += *d / count;
        }
        for i in 0..n {
            let after_i = r[i] - mean[i];
            for j in 0..n {
                comoment[i * n + j] += delta[j] * after_i;
            }
        }
    }
    let denom = T::of((lookback - 1) as f64);
    let mut omega: Vec<T> = comoment.iter().map(|&c| c / denom).collect();
    for i in 0..n {
        for j in 0..i {
            let avg = (omega[i * n + j] + omega[j * n + i]) / T::of(2.0);
            omega[i * n + j] = avg;
            omega[j * n + i] = avg;
        }
    }
    let min_ev = symmetric_eigenvalues(&omega, n)[0];
    if min_ev < T::of(-1e-10) {
        return Err(Error::Data(format!("sample covariance at t={t} has eigenvalue {min_ev}")));
    }
    let jitter = T::of(COVARIANCE_JITTER);
    for i in 0..n {
        omega[i * n + i] += jitter;
    }
    Ok(MomentEstimate { mu: mean, omega, jitter, lookback })
}
