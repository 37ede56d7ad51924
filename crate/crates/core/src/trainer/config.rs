use serde::{Deserialize, Serialize};

use crate::agents::{PolicyKind, PolicyShape, DEFAULT_DROPOUT, DEFAULT_UNITS, PVM_TAIL};
use crate::backtest::DEFAULT_COST_RATE;
use crate::{Error, Result};

/// Default clipping threshold on the global gradient norm.
pub const DEFAULT_GRAD_CLIP: f64 = 5.0;

/// Hyper-parameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub kind: PolicyKind,
    pub learning_rate: f64,
    /// Number of gradient steps, one mini-batch each.
    pub steps: usize,
    pub batch_size: usize,
    pub window: usize,
    pub cost_rate: f64,
    pub seed: u64,
    /// Checkpoint interval in steps; `None` keeps only the final parameters.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    /// Global-norm gradient clip; `None` disables clipping.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Offset between consecutive batch starts; `None` tiles batches (stride = batch size).
    #[serde(default)]
    pub stride: Option<usize>,
    pub use_pvm: bool,
    pub units: usize,
    pub dropout: f64,
}

impl TrainConfig {
    /// Published defaults for `kind`.
    pub fn new(kind: PolicyKind) -> Self {
        let learning_rate = match kind {
            PolicyKind::Cnn => 0.028,
            PolicyKind::Rnn => 0.00028,
            PolicyKind::Lstm => 0.0028,
        };
        Self {
            kind,
            learning_rate,
            steps: 50_000,
            batch_size: 109,
            window: 50,
            cost_rate: DEFAULT_COST_RATE,
            seed: 0,
            checkpoint_every: None,
            grad_clip: Some(DEFAULT_GRAD_CLIP),
            stride: None,
            use_pvm: true,
            units: DEFAULT_UNITS,
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::arg(format!("train.{field}: {msg}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate", format!("{} must be finite and non-negative", self.learning_rate));
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be at least 1".into());
        }
        if self.window < 2 {
            return fail("window", format!("{} must be at least 2", self.window));
        }
        if !(0.0..1.0).contains(&self.cost_rate) {
            return fail("cost_rate", format!("{} outside [0, 1)", self.cost_rate));
        }
        if self.stride == Some(0) {
            return fail("stride", "must be at least 1".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return fail("grad_clip", format!("{c} must be positive"));
            }
        }
        if self.checkpoint_every == Some(0) {
            return fail("checkpoint_every", "must be at least 1".into());
        }
        self.policy_shape(2).validate()
    }

    pub fn policy_shape(&self, n_assets: usize) -> PolicyShape {
        let mut shape = PolicyShape::new(self.kind, n_assets).with_window(self.window).with_pvm(self.use_pvm);
        shape.units = self.units;
        shape.dropout = self.dropout;
        shape.pvm_tail = PVM_TAIL;
        shape
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.batch_size)
    }
}

/// Per-step training trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Batch objective before the update (`NaN` for skipped steps).
    pub rewards: Vec<f64>,
    /// Parameter L2 norm after the step.
    pub param_norms: Vec<f64>,
    /// Wall-clock seconds per step. Not serialized, so stored histories stay reproducible.
    #[serde(skip)]
    pub step_seconds: Vec<f64>,
    /// Steps skipped because some bracket was non-positive.
    pub skipped: Vec<usize>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        assert_eq!(TrainConfig::new(PolicyKind::Rnn).learning_rate, 0.00028);
        let mut c = TrainConfig::new(PolicyKind::Cnn);
        assert_eq!(c.stride(), 109);
        c.validate().unwrap();
        c.window = 1;
        assert!(c.validate().unwrap_err().to_string().contains("train.window"));
    }

    #[test]
    fn json_round_trip() {
        let c = TrainConfig { stride: Some(3), ..TrainConfig::new(PolicyKind::Lstm) };
        let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
