use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use deepalloc::agents::PolicyKind;
use deepalloc::allocators::{AllocatorKind, AllocatorStrategy, DEFAULT_LOOKBACK};
use deepalloc::backtest::{CostModel, DEFAULT_COST_RATE};
use deepalloc::market::{CsvSchema, SynthSpec, DEFAULT_WINDOW};
use deepalloc::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// A strategy selectable from the config: a classical allocator or a policy network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StrategyId {
    Allocator(AllocatorKind),
    Policy(PolicyKind),
}

impl StrategyId {
    pub const ALL: [StrategyId; 7] = [
        StrategyId::Allocator(AllocatorKind::EqualWeight),
        StrategyId::Allocator(AllocatorKind::MeanVariance),
        StrategyId::Allocator(AllocatorKind::RiskParity),
        StrategyId::Allocator(AllocatorKind::MinVariance),
        StrategyId::Policy(PolicyKind::Cnn),
        StrategyId::Policy(PolicyKind::Rnn),
        StrategyId::Policy(PolicyKind::Lstm),
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyId::Allocator(k) => k.name(),
            StrategyId::Policy(k) => k.name(),
        }
    }

    pub fn is_policy(self) -> bool {
        matches!(self, StrategyId::Policy(_))
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
            format!("unknown strategy '{s}' (expected one of {})", names.join(", "))
        })
    }
}

impl TryFrom<String> for StrategyId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<StrategyId> for String {
    fn from(id: StrategyId) -> String {
        id.name().to_string()
    }
}

/// Where prices come from: an OHLC file or a synthetic market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<CsvSchema>,
    /// Subset of tickers to keep; all when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assets: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthSpec>,
}

/// Per-strategy parameter overrides. Allocator and policy fields are mutually exclusive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookback: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vol_target: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    /// Global gradient-norm clip; `0` disables clipping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_pvm: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
}

impl StrategyOverrides {
    fn allocator_fields(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.lookback.is_some() {
            v.push("lookback");
        }
        if self.baseline.is_some() {
            v.push("baseline");
        }
        if self.vol_target.is_some() {
            v.push("vol_target");
        }
        v
    }

    fn policy_fields(&self) -> Vec<&'static str> {
        let named = [
            ("learning_rate", self.learning_rate.is_some()),
            ("steps", self.steps.is_some()),
            ("batch_size", self.batch_size.is_some()),
            ("stride", self.stride.is_some()),
            ("grad_clip", self.grad_clip.is_some()),
            ("use_pvm", self.use_pvm.is_some()),
            ("units", self.units.is_some()),
            ("dropout", self.dropout.is_some()),
            ("checkpoint_every", self.checkpoint_every.is_some()),
        ];
        named.into_iter().filter(|(_, set)| *set).map(|(n, _)| n).collect()
    }
}

/// Values given on the command line; each replaces the corresponding config field.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Comma-separated strategy names.
    pub strategies: Option<String>,
    pub cost_bps: Option<f64>,
}

fn default_train_fraction() -> f64 {
    0.75
}

fn default_cost_rate() -> f64 {
    DEFAULT_COST_RATE
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything that defines a run. Serialized as TOML; see the README for the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub strategies: Vec<StrategyId>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_cost_rate")]
    pub cost_rate: f64,
    #[serde(default)]
    pub include_cash: bool,
    #[serde(default = "default_window")]
    pub window: usize,
    pub data: DataConfig,
    #[serde(default, rename = "strategy", skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<StrategyId, StrategyOverrides>,
}

fn field(path: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

impl RunConfig {
    /// Parses without validating, so command-line flags can still be applied.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg = Self::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies command-line flags on top of the file. Narrowing the strategy list drops the
    /// overrides of strategies no longer selected.
    pub fn apply(&mut self, flags: &FlagOverrides) -> Result<(), CliError> {
        if let Some(seed) = flags.seed {
            self.seed = seed;
        }
        if let Some(out) = &flags.out {
            self.output_dir = out.clone();
        }
        if let Some(bps) = flags.cost_bps {
            self.cost_rate = CostModel::from_bps(bps).map_err(|e| field("--cost-bps", e))?.mu_c;
        }
        if let Some(list) = &flags.strategies {
            self.strategies = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|e| field("--strategies", e)))
                .collect::<Result<_, _>>()?;
            let keep = self.strategies.clone();
            self.overrides.retain(|id, _| keep.contains(id));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.strategies.is_empty() {
            return Err(field("strategies", "select at least one strategy"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.strategies {
            if !seen.insert(*s) {
                return Err(field("strategies", format!("'{s}' listed twice")));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(field("train_fraction", format!("{} must lie strictly between 0 and 1", self.train_fraction)));
        }
        if !(0.0..1.0).contains(&self.cost_rate) {
            return Err(field("cost_rate", format!("{} must lie in [0, 1)", self.cost_rate)));
        }
        if self.window < 3 {
            return Err(field("window", format!("{} must be at least 3", self.window)));
        }
        match (&self.data.path, &self.data.synthetic) {
            (Some(_), Some(_)) => return Err(field("data", "set either `path` or `[data.synthetic]`, not both")),
            (None, None) => return Err(field("data", "set `path` or a `[data.synthetic]` section")),
            _ => {}
        }
        if self.data.synthetic.is_some() && self.data.schema.is_some() {
            return Err(field("data.schema", "only applies to file data"));
        }
        for (id, o) in &self.overrides {
            let at = |f: &str| format!("strategy.{id}.{f}");
            if !self.strategies.contains(id) {
                return Err(field(&format!("strategy.{id}"), "overrides a strategy that is not selected"));
            }
            let misplaced = if id.is_policy() { o.allocator_fields() } else { o.policy_fields() };
            if let Some(f) = misplaced.first() {
                let kind = if id.is_policy() { "policy" } else { "allocator" };
                return Err(field(&at(f), format!("not applicable to {kind} strategies")));
            }
            if o.lookback.is_some_and(|l| l < 2) {
                return Err(field(&at("lookback"), "must be at least 2"));
            }
            if o.vol_target.is_some() {
                if *id != StrategyId::Allocator(AllocatorKind::MinVariance) {
                    return Err(field(&at("vol_target"), "only applies to min_variance"));
                }
                if !self.include_cash {
                    return Err(field(&at("vol_target"), "needs include_cash = true"));
                }
                if !o.vol_target.is_some_and(|v| v > 0.0) {
                    return Err(field(&at("vol_target"), "must be positive"));
                }
            }
            if o.baseline.is_some() && *id != StrategyId::Allocator(AllocatorKind::MeanVariance) {
                return Err(field(&at("baseline"), "only applies to mean_variance"));
            }
            if o.grad_clip.is_some_and(|c| !(c >= 0.0)) {
                return Err(field(&at("grad_clip"), "must be non-negative (0 disables clipping)"));
            }
        }
        for id in &self.strategies {
            if let StrategyId::Policy(kind) = id {
                self.train_config(*kind).validate().map_err(|e| field(&format!("strategy.{id}"), e))?;
            }
        }
        Ok(())
    }

    fn overrides_for(&self, id: StrategyId) -> StrategyOverrides {
        self.overrides.get(&id).cloned().unwrap_or_default()
    }

    /// Longest history any selected allocator needs before its first decision.
    pub fn warmup(&self) -> usize {
        self.strategies
            .iter()
            .filter(|s| !s.is_policy() && **s != StrategyId::Allocator(AllocatorKind::EqualWeight))
            .map(|s| self.overrides_for(*s).lookback.unwrap_or(DEFAULT_LOOKBACK))
            .fold(self.window, usize::max)
    }

    pub fn allocator(&self, kind: AllocatorKind) -> AllocatorStrategy {
        let o = self.overrides_for(StrategyId::Allocator(kind));
        let mut s = AllocatorStrategy::new(kind);
        s.lookback = o.lookback.unwrap_or(DEFAULT_LOOKBACK);
        s.baseline = o.baseline;
        s.vol_target = o.vol_target;
        s
    }

    pub fn train_config(&self, kind: PolicyKind) -> TrainConfig {
        let o = self.overrides_for(StrategyId::Policy(kind));
        let d = TrainConfig::new(kind);
        TrainConfig {
            kind,
            learning_rate: o.learning_rate.unwrap_or(d.learning_rate),
            steps: o.steps.unwrap_or(d.steps),
            batch_size: o.batch_size.unwrap_or(d.batch_size),
            window: self.window,
            cost_rate: self.cost_rate,
            seed: self.seed,
            checkpoint_every: o.checkpoint_every,
            grad_clip: match o.grad_clip {
                Some(0.0) => None,
                Some(c) => Some(c),
                None => d.grad_clip,
            },
            stride: o.stride,
            use_pvm: o.use_pvm.unwrap_or(d.use_pvm),
            units: o.units.unwrap_or(d.units),
            dropout: o.dropout.unwrap_or(d.dropout),
        }
    }

    /// SHA-256 over the canonical JSON form of every result-relevant field (the output
    /// directory is left out).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("run config always serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7
strategies = ["equal_weight", "mean_variance", "cnn"]
cost_rate = 0.0005

[data.synthetic]
n_assets = 3
length = 400
drift = [0.001, 0.0, 0.0]
vol = [0.01, 0.01, 0.01]
seed = 3

[strategy.mean_variance]
baseline = 0.0002

[strategy.cnn]
steps = 20
learning_rate = 0.01
"#;

    #[test]
    fn shipped_example_is_valid() {
        let cfg = RunConfig::from_toml(include_str!("../../../deepalloc.toml")).unwrap();
        assert_eq!(cfg.strategies.len(), StrategyId::ALL.len());
    }

    #[test]
    fn parse_round_trip() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.window, 50);
        assert_eq!(cfg.train_config(PolicyKind::Cnn).steps, 20);
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_tracks_content_not_output_dir() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        let moved = RunConfig { output_dir: "elsewhere".into(), ..cfg.clone() };
        assert_eq!(moved.hash(), cfg.hash());
        let reseeded = RunConfig { seed: 8, ..cfg.clone() };
        assert_ne!(reseeded.hash(), cfg.hash());
    }

    #[test]
    fn field_level_errors() {
        let err = |text: &str| RunConfig::from_toml(text).unwrap_err().to_string();
        assert!(err(&SAMPLE.replace("\"equal_weight\", ", "\"equal_weight\", \"equal_weight\", ")).contains("listed twice"));
        assert!(err(&SAMPLE.replace("baseline = 0.0002", "steps = 3")).contains("strategy.mean_variance.steps"));
        assert!(err(&SAMPLE.replace("[strategy.cnn]", "[strategy.lstm]")).contains("strategy.lstm"));
        assert!(err(&SAMPLE.replace("cost_rate = 0.0005", "cost_rate = 2.0")).contains("cost_rate"));
        assert!(err(&SAMPLE.replace("\"cnn\"]", "\"dqn\"]")).contains("unknown strategy"));
        assert!(err(&SAMPLE.replace("learning_rate = 0.01", "learning_rate = -1.0")).contains("strategy.cnn"));
        assert!(err(&SAMPLE.replace("seed = 7\n", "")).contains("seed"));
    }

    #[test]
    fn flags_override_file() {
        let mut cfg = RunConfig::parse(SAMPLE).unwrap();
        let flags = FlagOverrides { seed: Some(9), strategies: Some("cnn, equal_weight".into()), cost_bps: Some(10.0), ..Default::default() };
        cfg.apply(&flags).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.cost_rate, 0.001);
        assert_eq!(cfg.overrides.len(), 1);
        let bad = FlagOverrides { strategies: Some("cnn,ppo".into()), ..Default::default() };
        assert!(cfg.apply(&bad).unwrap_err().to_string().contains("--strategies"));
    }
}
