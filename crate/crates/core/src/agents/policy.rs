//! CNN, RNN and LSTM allocation policies.
//!
//! All three share one layout: a per-asset feature extractor whose parameters are shared
//! across assets, followed by a head that stacks those features with the last `pvm_tail`
//! weight vectors as channels, mixes them with a 1×1 convolution into one score per asset,
//! and applies a softmax over assets.
//!
//! * CNN: `conv(1×3) → 2 maps → ReLU → conv(1×(W−2)) → units maps → ReLU`.
//! * RNN: `h ← tanh(x Wx + h Wh + b)` unrolled over the window, then a linear score.
//! * LSTM: standard input/forget/cell/output gates unrolled over the window, then a linear score.
//!
//! The network reads `ln` of the normalized price tensor, so a flat market is an all-zero input.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{WeightVector, PVM_TAIL};
use crate::market::{PriceTensor, CHANNELS};
use crate::numerics::{Graph, NodeId, ParamCheckpoint, ParamSet, Tensor, CHECKPOINT_FORMAT_VERSION};
use crate::{Error, Result, Scalar};

/// Maps produced by the first CNN convolution.
pub const CNN_FIRST_MAPS: usize = 2;
/// Width of the first CNN kernel.
pub const CNN_FIRST_KERNEL: usize = 3;
pub const DEFAULT_UNITS: usize = 20;
pub const DEFAULT_DROPOUT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Cnn,
    Rnn,
    Lstm,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Cnn, PolicyKind::Rnn, PolicyKind::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Cnn => "cnn",
            PolicyKind::Rnn => "rnn",
            PolicyKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(PolicyKind::Cnn),
            "rnn" => Ok(PolicyKind::Rnn),
            "lstm" => Ok(PolicyKind::Lstm),
            other => Err(Error::arg(format!("unknown policy kind `{other}`"))),
        }
    }
}

/// Architecture hyper-parameters; together with the seed they determine the initial weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub kind: PolicyKind,
    pub n_assets: usize,
    pub window: usize,
    /// Hidden units of the recurrent layer, or maps of the second CNN convolution.
    pub units: usize,
    pub dropout: f64,
    pub pvm_tail: usize,
    /// Whether the head sees the PVM tail; `false` is the no-turnover-control ablation.
    pub use_pvm: bool,
}

impl PolicyShape {
    pub fn new(kind: PolicyKind, n_assets: usize) -> Self {
        Self {
            kind,
            n_assets,
            window: crate::market::DEFAULT_WINDOW,
            units: DEFAULT_UNITS,
            dropout: DEFAULT_DROPOUT,
            pvm_tail: PVM_TAIL,
            use_pvm: true,
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    pub fn with_pvm(mut self, use_pvm: bool) -> Self {
        self.use_pvm = use_pvm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_assets < 2 {
            return Err(Error::arg("a policy needs at least two assets"));
        }
        if self.units == 0 || self.pvm_tail == 0 {
            return Err(Error::arg("units and PVM tail must be positive"));
        }
        let min_window = if self.kind == PolicyKind::Cnn { CNN_FIRST_KERNEL } else { 1 };
        if self.window < min_window {
            return Err(Error::arg(format!("window {} too short for {}", self.window, self.kind)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::arg(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Channels entering the 1×1 head convolution.
    fn head_channels(&self) -> usize {
        let features = if self.kind == PolicyKind::Cnn { self.units } else { 1 };
        features + if self.use_pvm { self.pvm_tail } else { 0 }
    }

    /// `(name, shape, fan_in, fan_out)` for every parameter.
    fn layout(&self) -> Vec<(&'static str, Vec<usize>, usize, usize)> {
        let u = self.units;
        let head = self.head_channels();
        let mut v = match self.kind {
            PolicyKind::Cnn => {
                let w2 = self.window - CNN_FIRST_KERNEL + 1;
                vec![
                    ("conv1.kernel", vec![CNN_FIRST_MAPS, CHANNELS, 1, CNN_FIRST_KERNEL], CHANNELS * CNN_FIRST_KERNEL, CNN_FIRST_MAPS * CNN_FIRST_KERNEL),
                    ("conv1.bias", vec![CNN_FIRST_MAPS], 0, 0),
                    ("conv2.kernel", vec![u, CNN_FIRST_MAPS, 1, w2], CNN_FIRST_MAPS * w2, u * w2),
                    ("conv2.bias", vec![u], 0, 0),
                ]
            }
            PolicyKind::Rnn => vec![
                ("rnn.wx", vec![CHANNELS, u], CHANNELS, u),
                ("rnn.wh", vec![u, u], u, u),
                ("rnn.b", vec![u], 0, 0),
                ("score.w", vec![u, 1], u, 1),
                ("score.b", vec![1], 0, 0),
            ],
            PolicyKind::Lstm => vec![
                ("lstm.wx", vec![CHANNELS, 4 * u], CHANNELS, 4 * u),
                ("lstm.wh", vec![u, 4 * u], u, 4 * u),
                ("lstm.b", vec![4 * u], 0, 0),
                ("score.w", vec![u, 1], u, 1),
                ("score.b", vec![1], 0, 0),
            ],
        };
        v.push(("head.kernel", vec![1, head, 1, 1], head, 1));
        v.push(("head.bias", vec![1], 0, 0));
        v
    }
}

/// A policy network: architecture plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec<T: Scalar> {
    pub shape: PolicyShape,
    pub seed: u64,
    pub params: ParamSet<T>,
}

/// Parameter nodes of a policy registered in one graph.
#[derive(Debug, Clone)]
pub struct PolicyNodes(BTreeMap<String, NodeId>);

impl PolicyNodes {
    fn get(&self, name: &str) -> NodeId {
        self.0[name]
    }
}

impl<T: Scalar> PolicySpec<T> {
    /// Default architecture (window 50, 20 units, dropout 0.1, PVM tail 20).
    pub fn init(kind: PolicyKind, n_assets: usize, seed: u64) -> Result<Self> {
        Self::init_with(PolicyShape::new(kind, n_assets), seed)
    }

    /// Glorot-uniform weights, zero biases, LSTM forget-gate bias 1.
    pub fn init_with(shape: PolicyShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, dims, fan_in, fan_out) in shape.layout() {
            let n: usize = dims.iter().product();
            let data: Vec<T> = if fan_in + fan_out == 0 {
                let mut b = vec![T::zero(); n];
                if name == "lstm.b" {
                    let u = shape.units;
                    b[u..2 * u].iter_mut().for_each(|v| *v = T::one());
                }
                b
            } else {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| T::of(rng.random_range(-limit..limit))).collect()
            };
            params.insert(name, Tensor::new(dims, data)?);
        }
        Ok(Self { shape, seed, params })
    }

    pub fn kind(&self) -> PolicyKind {
        self.shape.kind
    }

    pub fn n_assets(&self) -> usize {
        self.shape.n_assets
    }

    pub fn window(&self) -> usize {
        self.shape.window
    }

    /// Adds every parameter to `g` as a named parameter node.
    pub fn register(&self, g: &mut Graph<T>) -> Result<PolicyNodes> {
        let mut ids = BTreeMap::new();
        for (name, value) in self.params.iter() {
            ids.insert(name.clone(), g.param(name, value.clone())?);
        }
        Ok(PolicyNodes(ids))
    }

    fn check_inputs(&self, state: &PriceTensor, tail: &[WeightVector<T>]) -> Result<()> {
        let s = &self.shape;
        if state.shape() != [CHANNELS, s.n_assets, s.window] {
            return Err(Error::arg(format!(
                "state shape {:?}, policy expects {:?}",
                state.shape(),
                [CHANNELS, s.n_assets, s.window]
            )));
        }
        if s.use_pvm && (tail.len() != s.pvm_tail || tail.iter().any(|w| w.len() != s.n_assets)) {
            return Err(Error::arg(format!("PVM tail must hold {} vectors of {} weights", s.pvm_tail, s.n_assets)));
        }
        Ok(())
    }

    /// Appends the policy to `g` and returns the node holding the `(n_assets)` weights.
    ///
    /// `dropout_seed` selects training mode; `None` disables dropout.
    pub fn build(
        &self,
        g: &mut Graph<T>,
        nodes: &PolicyNodes,
        state: &PriceTensor,
        tail: &[WeightVector<T>],
        dropout_seed: Option<u64>,
    ) -> Result<NodeId> {
        self.check_inputs(state, tail)?;
        let (n, w, u) = (self.shape.n_assets, self.shape.window, self.shape.units);
        let logs: Vec<T> = state.values().iter().map(|&v| T::of(v.ln())).collect();

        // Per-asset features as (channels × n × 1).
        let features = match self.shape.kind {
            PolicyKind::Cnn => {
                let x = g.constant(Tensor::new(vec![CHANNELS, n, w], logs)?);
                let c1 = g.conv2d(x, nodes.get("conv1.kernel"), Some(nodes.get("conv1.bias")))?;
                let r1 = g.relu(c1)?;
                let c2 = g.conv2d(r1, nodes.get("conv2.kernel"), Some(nodes.get("conv2.bias")))?;
                g.relu(c2)?
            }
            PolicyKind::Rnn | PolicyKind::Lstm => {
                let mut h: Option<NodeId> = None;
                let mut c: Option<NodeId> = None;
                let prefix = if self.shape.kind == PolicyKind::Rnn { "rnn" } else { "lstm" };
                let (wx, wh, b) = (
                    nodes.get(&format!("{prefix}.wx")),
                    nodes.get(&format!("{prefix}.wh")),
                    nodes.get(&format!("{prefix}.b")),
                );
                for k in 0..w {
                    let step: Vec<T> =
                        (0..n).flat_map(|i| (0..CHANNELS).map(move |ch| (ch, i))).map(|(ch, i)| logs[(ch * n + i) * w + k]).collect();
                    let xk = g.constant(Tensor::new(vec![n, CHANNELS], step)?);
                    let mut pre = g.matmul(xk, wx)?;
                    if let Some(hp) = h {
                        let rec = g.matmul(hp, wh)?;
                        pre = g.add(pre, rec)?;
                    }
                    pre = g.add(pre, b)?;
                    if self.shape.kind == PolicyKind::Rnn {
                        h = Some(g.tanh(pre)?);
                    } else {
                        let gate = |g: &mut Graph<T>, j: usize| g.slice(pre, 1, j * u, (j + 1) * u);
                        let (ig, fg, cg, og) = (gate(g, 0)?, gate(g, 1)?, gate(g, 2)?, gate(g, 3)?);
                        let (ig, fg, og) = (g.sigmoid(ig)?, g.sigmoid(fg)?, g.sigmoid(og)?);
                        let cand = g.tanh(cg)?;
                        let write = g.mul(ig, cand)?;
                        let cell = match c {
                            Some(cp) => {
                                let keep = g.mul(fg, cp)?;
                                g.add(keep, write)?
                            }
                            None => write,
                        };
                        let squashed = g.tanh(cell)?;
                        h = Some(g.mul(og, squashed)?);
                        c = Some(cell);
                    }
                }
                let h = g.dropout(h.expect("window ≥ 1"), self.shape.dropout, dropout_seed)?;
                let s = g.matmul(h, nodes.get("score.w"))?;
                let s = g.add(s, nodes.get("score.b"))?;
                g.reshape(s, &[1, n, 1])?
            }
        };

        let stacked = if self.shape.use_pvm {
            let past: Vec<T> = tail.iter().flat_map(|wv| wv.iter().copied()).collect();
            let past = g.constant(Tensor::new(vec![self.shape.pvm_tail, n, 1], past)?);
            g.concat(&[features, past], 0)?
        } else {
            features
        };
        let scores = g.conv2d(stacked, nodes.get("head.kernel"), Some(nodes.get("head.bias")))?;
        let scores = g.reshape(scores, &[n])?;
        g.softmax(scores)
    }

    /// Runs the policy on one state.
    pub fn forward(&self, state: &PriceTensor, tail: &[WeightVector<T>], dropout_seed: Option<u64>) -> Result<WeightVector<T>> {
        let mut g = Graph::new();
        let nodes = self.register(&mut g)?;
        let out = self.build(&mut g, &nodes, state, tail, dropout_seed)?;
        WeightVector::new(g.value(out).data().to_vec())
    }

    pub fn to_checkpoint(&self) -> PolicyCheckpoint<T> {
        PolicyCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            header: PolicyHeader { shape: self.shape, seed: self.seed },
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: PolicyCheckpoint<T>) -> Result<Self> {
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::arg(format!("unsupported checkpoint format {}", ck.format_version)));
        }
        let template = Self::init_with(ck.header.shape, ck.header.seed)?;
        if template.params.names() != ck.params.names() {
            return Err(Error::arg("checkpoint parameters do not match the declared architecture"));
        }
        let mut spec = template;
        spec.params.assign(ck.params.to_vec())?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        if let Some(name) = self.params.first_non_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        Ok(serde_json::to_string_pretty(&self.to_checkpoint())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_str(text)?)
    }
}

/// `policy_forward` in free-function form: `train_mode` enables dropout seeded by `seed`.
pub fn policy_forward<T: Scalar>(
    spec: &PolicySpec<T>,
    state: &PriceTensor,
    pvm_tail: &[WeightVector<T>],
    train_mode: bool,
    seed: u64,
) -> Result<WeightVector<T>> {
    spec.forward(state, pvm_tail, train_mode.then_some(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyHeader {
    #[serde(flatten)]
    pub shape: PolicyShape,
    pub seed: u64,
}

/// Parameter checkpoint plus the architecture header needed to rebuild the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PolicyCheckpoint<T: Scalar> {
    pub format_version: u32,
    pub header: PolicyHeader,
    pub params: ParamSet<T>,
}

impl<T: Scalar> From<PolicyCheckpoint<T>> for ParamCheckpoint<T> {
    fn from(ck: PolicyCheckpoint<T>) -> Self {
        ParamCheckpoint { format_version: ck.format_version, params: ck.params }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn flat_state(n: usize, w: usize) -> PriceTensor {
        PriceTensor::from_values(vec![1.0; 3 * n * w], n, w, w, NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()).unwrap()
    }

    #[test]
    fn same_seed_same_params() {
        for kind in PolicyKind::ALL {
            let a = PolicySpec::<f64>::init(kind, 5, 11).unwrap();
            let b = PolicySpec::<f64>::init(kind, 5, 11).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, PolicySpec::<f64>::init(kind, 5, 12).unwrap());
        }
    }

    #[test]
    fn cnn_first_layer_is_two_maps_of_24_by_48() {
        let spec = PolicySpec::<f64>::init(PolicyKind::Cnn, 24, 1).unwrap();
        let mut g = Graph::new();
        let nodes = spec.register(&mut g).unwrap();
        let state = flat_state(24, 50);
        let tail = vec![WeightVector::uniform(24); PVM_TAIL];
        spec.build(&mut g, &nodes, &state, &tail, None).unwrap();
        let conv1 = g
            .node_ids()
            .map(|id| g.value(id))
            .find(|v| v.shape().len() == 3 && v.shape()[0] == 2)
            .expect("conv1 output");
        assert_eq!(conv1.shape(), &[2, 24, 48]);
    }

    #[test]
    fn lstm_parameter_count() {
        let u = DEFAULT_UNITS;
        let spec = PolicySpec::<f64>::init(PolicyKind::Lstm, 24, 1).unwrap();
        let gates = 4 * (u * (3 + u) + u);
        let score = u + 1;
        let head = (1 + PVM_TAIL) + 1;
        assert_eq!(gates, 1920);
        assert_eq!(spec.params.count(), gates + score + head);
    }

    #[test]
    fn forget_bias_is_one() {
        let spec = PolicySpec::<f64>::init(PolicyKind::Lstm, 3, 1).unwrap();
        let b = spec.params.get("lstm.b").unwrap().data();
        assert!(b[..20].iter().all(|&v| v == 0.0));
        assert!(b[20..40].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(PolicySpec::<f64>::init(PolicyKind::Cnn, 1, 0).is_err());
        assert!("gru".parse::<PolicyKind>().is_err());
        let spec = PolicySpec::<f64>::init(PolicyKind::Rnn, 3, 0).unwrap();
        let tail = vec![WeightVector::uniform(3); PVM_TAIL];
        assert!(spec.forward(&flat_state(3, 49), &tail, None).is_err());
        assert!(spec.forward(&flat_state(3, 50), &tail[..19], None).is_err());
    }

    #[test]
    fn symmetric_input_gives_uniform_output() {
        for kind in PolicyKind::ALL {
            let spec = PolicySpec::<f64>::init_with(PolicyShape::new(kind, 6).with_window(12), 3).unwrap();
            let tail = vec![WeightVector::uniform(6); PVM_TAIL];
            let w = spec.forward(&flat_state(6, 12), &tail, None).unwrap();
            for &v in w.iter() {
                assert!((v - 1.0 / 6.0).abs() < 1e-15, "{kind}: {v}");
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        for kind in PolicyKind::ALL {
            let spec = PolicySpec::<f64>::init_with(PolicyShape::new(kind, 3).with_window(8).with_pvm(kind != PolicyKind::Rnn), 9).unwrap();
            let back = PolicySpec::<f64>::from_json(&spec.to_json().unwrap()).unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn single_precision_policy_runs() {
        let spec = PolicySpec::<f32>::init_with(PolicyShape::new(PolicyKind::Lstm, 4).with_window(10), 2).unwrap();
        let tail = vec![WeightVector::<f32>::uniform(4); PVM_TAIL];
        let w = spec.forward(&flat_state(4, 10), &tail, Some(1)).unwrap();
        assert_eq!(w.len(), 4);
    }
}
