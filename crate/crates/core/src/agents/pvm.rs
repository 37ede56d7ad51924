use std::collections::BTreeMap;

use super::WeightVector;
use crate::{Error, Result, Scalar};

/// Number of past weight vectors fed back into the policy head.
pub const PVM_TAIL: usize = 20;

/// Portfolio vector memory: the policy's past outputs indexed by date.
///
/// Entries that were never written read back as the uniform vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioVectorMemory<T: Scalar = f64> {
    store: BTreeMap<usize, WeightVector<T>>,
    n_weights: usize,
    tail_length: usize,
    uniform: WeightVector<T>,
}

impl<T: Scalar> PortfolioVectorMemory<T> {
    pub fn new(n_weights: usize, tail_length: usize) -> Self {
        Self { store: BTreeMap::new(), n_weights, tail_length, uniform: WeightVector::uniform(n_weights) }
    }

    pub fn n_weights(&self) -> usize {
        self.n_weights
    }

    pub fn tail_length(&self) -> usize {
        self.tail_length
    }

    pub fn get(&self, t: usize) -> &WeightVector<T> {
        self.store.get(&t).unwrap_or(&self.uniform)
    }

    /// Weights at `t − tail_length ..= t − 1`, oldest first. Never includes `t`.
    pub fn read(&self, t: usize) -> Vec<WeightVector<T>> {
        (0..self.tail_length)
            .map(|k| {
                let back = self.tail_length - k;
                t.checked_sub(back).map_or(&self.uniform, |s| self.get(s)).clone()
            })
            .collect()
    }

    pub fn write(&mut self, t: usize, w: WeightVector<T>) -> Result<()> {
        if w.len() != self.n_weights {
            return Err(Error::arg(format!("PVM holds {} weights, got {}", self.n_weights, w.len())));
        }
        self.store.insert(t, w);
        Ok(())
    }

    /// Validates a raw vector before storing it.
    pub fn write_raw(&mut self, t: usize, w: Vec<T>) -> Result<()> {
        self.write(t, WeightVector::new(w)?)
    }

    pub fn clear(&mut self) {
        self.store.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_memory_reads_uniform() {
        let m = PortfolioVectorMemory::<f64>::new(4, PVM_TAIL);
        for t in [0, 3, 100] {
            let tail = m.read(t);
            assert_eq!(tail.len(), 20);
            assert!(tail.iter().all(|w| w.as_slice() == [0.25; 4]));
        }
    }

    #[test]
    fn read_your_write_without_lookahead() {
        let mut m = PortfolioVectorMemory::<f64>::new(2, PVM_TAIL);
        let w = WeightVector::new(vec![0.9, 0.1]).unwrap();
        m.write(5, w.clone()).unwrap();
        assert_eq!(m.read(6).last().unwrap(), &w);
        assert!(m.read(5).iter().all(|v| v.as_slice() == [0.5, 0.5]));
        assert_eq!(m.read(25)[0], w);
        assert!(m.read(26).iter().all(|v| v != &w));
    }

    #[test]
    fn overwrite_and_idempotence() {
        let mut m = PortfolioVectorMemory::<f64>::new(2, 3);
        m.write_raw(1, vec![1.0, 0.0]).unwrap();
        m.write_raw(1, vec![0.0, 1.0]).unwrap();
        assert_eq!(m.get(1).as_slice(), &[0.0, 1.0]);
        let snapshot = m.clone();
        m.write_raw(1, vec![0.0, 1.0]).unwrap();
        assert_eq!(m, snapshot);
    }

    #[test]
    fn rejects_invalid_vectors() {
        let mut m = PortfolioVectorMemory::<f64>::new(2, 3);
        assert!(matches!(m.write_raw(0, vec![0.45, 0.45]), Err(Error::Argument(_))));
        assert!(m.write_raw(0, vec![1.0]).is_err());
    }
}
