use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result, Scalar};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Named parameter tensors, iterated in name order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", transparent)]
pub struct ParamSet<T>(BTreeMap<String, Tensor<T>>);

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self(BTreeMap::new())
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.0.iter()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.0.values_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.0.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.0.values().map(Tensor::len).sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.values().map(|t| t.norm_sq().as_f64()).sum::<f64>().sqrt()
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.0.iter().find(|(_, t)| !t.is_finite()).map(|(n, _)| n.as_str())
    }

    /// Tensors in name order, detached from their names.
    pub fn to_vec(&self) -> Vec<Tensor<T>> {
        self.0.values().cloned().collect()
    }

    /// Replaces every tensor, in name order.
    pub fn assign(&mut self, values: Vec<Tensor<T>>) -> Result<()> {
        if values.len() != self.0.len() {
            return Err(Error::arg(format!("{} tensors for {} parameters", values.len(), self.0.len())));
        }
        for ((name, slot), v) in self.0.iter_mut().zip(values) {
            if slot.shape() != v.shape() {
                return Err(Error::arg(format!("`{name}`: shape {:?} vs {:?}", v.shape(), slot.shape())));
            }
            *slot = v;
        }
        Ok(())
    }
}

/// Versioned JSON container for a [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ParamCheckpoint<T> {
    pub format_version: u32,
    pub params: ParamSet<T>,
}

impl<T: Scalar> ParamCheckpoint<T> {
    pub fn new(params: ParamSet<T>) -> Self {
        Self { format_version: CHECKPOINT_FORMAT_VERSION, params }
    }

    pub fn to_json(&self) -> Result<String> {
        if let Some(name) = self.params.first_non_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text)?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::arg(format!("unsupported checkpoint format {}", ck.format_version)));
        }
        for (name, t) in ck.params.iter() {
            Tensor::new(t.shape().to_vec(), t.data().to_vec()).map_err(|e| Error::arg(format!("`{name}`: {e}")))?;
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_round_trip_is_bit_identical(vals in proptest::collection::vec(-1e6f64..1e6, 1..40), tiny in 1e-300f64..1e-290) {
            let mut p = ParamSet::new();
            p.insert("w", Tensor::vector(vals.clone()));
            p.insert("b", Tensor::scalar(tiny));
            let ck = ParamCheckpoint::new(p);
            let back = ParamCheckpoint::<f64>::from_json(&ck.to_json().unwrap()).unwrap();
            for (a, b) in ck.params.iter().zip(back.params.iter()) {
                prop_assert_eq!(a.1.shape(), b.1.shape());
                for (x, y) in a.1.data().iter().zip(b.1.data()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn rejects_other_versions_and_bad_shapes() {
        let text = r#"{"format_version": 9, "params": {}}"#;
        assert!(ParamCheckpoint::<f64>::from_json(text).is_err());
        let text = r#"{"format_version": 1, "params": {"w": {"shape": [2], "data": [1.0]}}}"#;
        assert!(ParamCheckpoint::<f64>::from_json(text).is_err());
    }

    #[test]
    fn non_finite_not_serialized() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(f64::NAN));
        assert!(matches!(ParamCheckpoint::new(p).to_json(), Err(Error::NonFinite(_))));
    }
}
