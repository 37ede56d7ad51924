use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Long-only, fully invested allocation: every component non-negative, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "Vec<T>", into = "Vec<T>")]
pub struct WeightVector<T: Scalar>(Vec<T>);

impl<T: Scalar> WeightVector<T> {
    /// Tolerance on `|Σw − 1|`: 1e-9, widened for single precision.
    pub fn sum_tolerance(n: usize) -> T {
        T::of(1e-9).max(T::epsilon() * T::of(16.0 * n.max(1) as f64))
    }

    pub fn new(w: Vec<T>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::arg("empty weight vector"));
        }
        if let Some(k) = w.iter().position(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::arg(format!("weight {k} is {} (must be finite and ≥ 0)", w[k])));
        }
        let s: T = w.iter().copied().sum();
        if (s - T::one()).abs() > Self::sum_tolerance(w.len()) {
            return Err(Error::arg(format!("weights sum to {s}, expected 1")));
        }
        Ok(Self(w))
    }

    /// Clips tiny negative round-off to zero and renormalizes before validating.
    pub fn from_solver(w: Vec<T>, tol: T) -> Result<Self> {
        let mut w = w;
        for v in w.iter_mut() {
            if *v < T::zero() && *v >= -tol {
                *v = T::zero();
            }
        }
        let s: T = w.iter().copied().sum();
        if s > T::zero() && (s - T::one()).abs() <= tol {
            for v in w.iter_mut() {
                *v /= s;
            }
        }
        Self::new(w)
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform weights need at least one asset");
        Self(vec![T::one() / T::of(n as f64); n])
    }

    pub fn one_hot(n: usize, k: usize) -> Self {
        let mut w = vec![T::zero(); n];
        w[k] = T::one();
        Self(w)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T: Scalar> std::ops::Deref for WeightVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for WeightVector<T> {
    type Error = Error;

    fn try_from(w: Vec<T>) -> Result<Self> {
        Self::new(w)
    }
}

impl<T: Scalar> From<WeightVector<T>> for Vec<T> {
    fn from(w: WeightVector<T>) -> Vec<T> {
        w.0
    }
}
