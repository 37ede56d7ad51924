use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use deepalloc::agents::{PolicyCheckpoint, PolicyKind, PolicySpec};
use deepalloc::backtest::{run_backtest, BacktestResult, CostModel, MetricsBlock};
use deepalloc::market::{ingest_ohlc, split_train_test, synth_gbm, write_ohlc, PriceSeries};
use deepalloc::trainer::{evaluate, train_with, TrainHistory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifacts::{read_json, Artifacts};
use crate::config::{RunConfig, StrategyId};
use crate::CliError;

/// Column order of the comparison table.
pub const METRIC_COLUMNS: [&str; 4] = ["Total Returns", "Sharpe Ratio", "Max Drawdown", "Daily Turnover"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Train,
    Backtest,
    Compare,
    Report,
}

/// What a command produced.
#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    /// Human-readable table for `compare` and `backtest`.
    pub table: Option<String>,
}

/// Dataset plus the train/test split every command shares.
pub struct Prepared {
    pub cfg: RunConfig,
    pub config_hash: String,
    pub data_hash: String,
    pub series: PriceSeries,
    pub train: PriceSeries,
    pub test: PriceSeries,
}

impl Prepared {
    pub fn new(cfg: RunConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let series = load_series(&cfg)?;
        let data_hash = dataset_hash(&series)?;
        let (train, test) = split_train_test(&series, cfg.train_fraction, cfg.warmup())?;
        if test.len() <= test.warmup() + 1 {
            return Err(CliError::Config(format!(
                "train_fraction: test segment of {} dates leaves nothing to trade after {} warm-up dates",
                test.len(),
                test.warmup()
            )));
        }
        Ok(Self { config_hash: cfg.hash(), cfg, data_hash, series, train, test })
    }

    pub fn cost(&self) -> CostModel {
        CostModel { mu_c: self.cfg.cost_rate }
    }

    /// Hash of everything a trained `kind` depends on: the data, the split and its training
    /// config. Unlike the config hash it ignores the other selected strategies.
    pub fn training_hash(&self, kind: PolicyKind) -> String {
        let key = (&self.data_hash, self.cfg.train_fraction, self.cfg.train_config(kind));
        hex::encode(Sha256::digest(serde_json::to_vec(&key).expect("training key serializes")))
    }
}

fn load_series(cfg: &RunConfig) -> Result<PriceSeries, CliError> {
    let data = &cfg.data;
    let mut series = match (&data.path, &data.synthetic) {
        (Some(path), _) => ingest_ohlc(path, &data.schema.clone().unwrap_or_default()).map_err(|e| match e {
            deepalloc::Error::Io(source) => CliError::io(path, source),
            other => other.into(),
        })?,
        (None, Some(spec)) => synth_gbm(spec)?,
        (None, None) => return Err(CliError::Config("data: no source".into())),
    };
    if let Some(assets) = &data.assets {
        series = series.select(assets)?;
    }
    Ok(if cfg.include_cash { series.with_cash() } else { series })
}

/// Canonical CSV form of a series.
pub fn canonical_csv(series: &PriceSeries) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_ohlc(series, &mut buf)?;
    Ok(buf)
}

/// Git-style content hash (`sha256("blob <len>\0" ‖ bytes)`) of the canonical CSV.
pub fn dataset_hash(series: &PriceSeries) -> Result<String, CliError> {
    let bytes = canonical_csv(series)?;
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(&bytes);
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub config_hash: String,
    pub data_hash: String,
    pub tickers: Vec<String>,
    pub n_dates: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub train_dates: usize,
    pub test_dates: usize,
}

/// A trained policy on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredPolicy {
    pub config_hash: String,
    pub data_hash: String,
    pub training_hash: String,
    pub strategy: String,
    pub step: usize,
    pub checkpoint: PolicyCheckpoint<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredResult {
    pub config_hash: String,
    pub data_hash: String,
    pub result: BacktestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub skipped_steps: usize,
    /// Mean batch objective over the last 100 non-skipped steps.
    pub final_reward: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub data_hash: String,
    pub config: RunConfig,
    pub training: BTreeMap<String, TrainSummary>,
    /// Test-segment metrics of each trained policy.
    pub final_metrics: BTreeMap<String, MetricsBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub strategy: String,
    #[serde(rename = "Total Returns")]
    pub total_return: f64,
    #[serde(rename = "Sharpe Ratio")]
    pub sharpe: Option<f64>,
    #[serde(rename = "Max Drawdown")]
    pub max_drawdown: f64,
    #[serde(rename = "Daily Turnover")]
    pub daily_turnover: f64,
}

impl MetricsRow {
    fn new(strategy: &str, m: &MetricsBlock) -> Self {
        Self {
            strategy: strategy.to_string(),
            total_return: m.total_return,
            sharpe: m.sharpe,
            max_drawdown: m.max_drawdown,
            daily_turnover: m.daily_turnover,
        }
    }
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub config_hash: String,
    pub data_hash: String,
    pub columns: Vec<String>,
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn render(&self) -> String {
        let mut out = format!("{:<14}", "strategy");
        for c in METRIC_COLUMNS {
            let _ = write!(out, "{c:>16}");
        }
        out.push('\n');
        for r in &self.rows {
            let sharpe = r.sharpe.map_or_else(|| "n/a".to_string(), |s| format!("{s:.3}"));
            let _ = writeln!(
                out,
                "{:<14}{:>15.2}%{:>16}{:>15.2}%{:>15.2}%",
                r.strategy, r.total_return, sharpe, r.max_drawdown, r.daily_turnover
            );
        }
        out
    }

    fn to_csv(&self) -> String {
        let mut out = String::from("strategy");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.rows {
            let sharpe = r.sharpe.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", r.strategy, r.total_return, sharpe, r.max_drawdown, r.daily_turnover);
        }
        out
    }
}

pub fn run(command: Command, cfg: RunConfig) -> Result<Report, CliError> {
    let prepared = Prepared::new(cfg)?;
    let mut artifacts = Artifacts::open(&prepared.cfg.output_dir)?;
    let table = match command {
        Command::Ingest => ingest(&prepared, &mut artifacts)?,
        Command::Train => train(&prepared, &mut artifacts)?,
        Command::Backtest => backtest(&prepared, &mut artifacts)?,
        Command::Compare => compare(&prepared, &mut artifacts)?,
        Command::Report => report(&prepared, &mut artifacts)?,
    };
    Ok(Report { files: artifacts.commit(), table })
}

fn ingest(p: &Prepared, out: &mut Artifacts) -> Result<Option<String>, CliError> {
    out.write("dataset.csv", &canonical_csv(&p.series)?)?;
    let info = DatasetInfo {
        config_hash: p.config_hash.clone(),
        data_hash: p.data_hash.clone(),
        tickers: p.series.tickers().to_vec(),
        n_dates: p.series.len(),
        first_date: p.series.date(0),
        last_date: p.series.date(p.series.len() - 1),
        train_dates: p.train.len(),
        test_dates: p.test.len() - p.test.warmup(),
    };
    out.write_json("dataset.json", &info)?;
    log::info!("ingested {} dates × {} assets, data hash {}", info.n_dates, info.tickers.len(), info.data_hash);
    Ok(None)
}

fn policies(cfg: &RunConfig) -> Vec<PolicyKind> {
    cfg.strategies
        .iter()
        .filter_map(|s| match s {
            StrategyId::Policy(k) => Some(*k),
            StrategyId::Allocator(_) => None,
        })
        .collect()
}

fn checkpoint_name(kind: PolicyKind, step: Option<usize>) -> String {
    match step {
        Some(s) => format!("checkpoint_{kind}_step{s}.json"),
        None => format!("checkpoint_{kind}.json"),
    }
}

fn stored(p: &Prepared, kind: PolicyKind, step: usize, spec: &PolicySpec<f64>) -> StoredPolicy {
    StoredPolicy {
        config_hash: p.config_hash.clone(),
        data_hash: p.data_hash.clone(),
        training_hash: p.training_hash(kind),
        strategy: kind.name().to_string(),
        step,
        checkpoint: spec.to_checkpoint(),
    }
}

fn train(p: &Prepared, out: &mut Artifacts) -> Result<Option<String>, CliError> {
    let kinds = policies(&p.cfg);
    if kinds.is_empty() {
        return Err(CliError::Config("strategies: `train` needs at least one of cnn, rnn, lstm".into()));
    }
    let mut training = BTreeMap::new();
    let mut final_metrics = BTreeMap::new();
    for kind in kinds {
        let tc = p.cfg.train_config(kind);
        log::info!("training {kind} for {} steps", tc.steps);
        let mut on_checkpoint = |step: usize, spec: &PolicySpec<f64>| -> deepalloc::Result<()> {
            let name = checkpoint_name(kind, (step != tc.steps).then_some(step));
            out.write_json(&name, &stored(p, kind, step, spec)).map_err(|e| deepalloc::Error::Io(std::io::Error::other(e.to_string())))?;
            Ok(())
        };
        let (spec, history) = train_with(&tc, &p.train, &mut on_checkpoint)?;
        if tc.steps == 0 {
            out.write_json(&checkpoint_name(kind, None), &stored(p, kind, 0, &spec))?;
        }
        out.write_json(&format!("history_{kind}.json"), &HistoryFile { config_hash: &p.config_hash, history: &history })?;
        training.insert(kind.name().to_string(), summarize(&history));
        let result = evaluate(&spec, &p.test, p.cost())?;
        final_metrics.insert(kind.name().to_string(), result.metrics);
    }
    let manifest = Manifest {
        config_hash: p.config_hash.clone(),
        seed: p.cfg.seed,
        data_hash: p.data_hash.clone(),
        config: p.cfg.clone(),
        training,
        final_metrics,
    };
    out.write_json("manifest.json", &manifest)?;
    Ok(None)
}

#[derive(Serialize)]
struct HistoryFile<'a> {
    config_hash: &'a str,
    history: &'a TrainHistory,
}

fn summarize(h: &TrainHistory) -> TrainSummary {
    let finite: Vec<f64> = h.rewards.iter().copied().filter(|r| r.is_finite()).collect();
    let tail = &finite[finite.len().saturating_sub(100)..];
    TrainSummary {
        steps: h.len(),
        skipped_steps: h.skipped.len(),
        final_reward: (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64),
    }
}

/// Loads `checkpoint_<kind>.json` if present, otherwise trains in memory.
fn policy_for(p: &Prepared, dir: &Path, kind: PolicyKind) -> Result<PolicySpec<f64>, CliError> {
    let path = dir.join(checkpoint_name(kind, None));
    if path.exists() {
        let s: StoredPolicy = read_json(&path)?;
        if s.training_hash != p.training_hash(kind) {
            return Err(CliError::Mismatch(format!(
                "{} was trained under different data or {kind} settings (config {}); rerun `train`",
                path.display(),
                s.config_hash
            )));
        }
        let spec = PolicySpec::from_checkpoint(s.checkpoint)?;
        if spec.n_assets() != p.series.n_assets() {
            return Err(CliError::Mismatch(format!("{}: policy has {} assets, data has {}", path.display(), spec.n_assets(), p.series.n_assets())));
        }
        log::info!("loaded {kind} from {}", path.display());
        return Ok(spec);
    }
    log::info!("no checkpoint for {kind}; training in memory");
    let (spec, _) = deepalloc::trainer::train(&p.cfg.train_config(kind), &p.train)?;
    Ok(spec)
}

fn check_hash(path: &Path, found: &str, expected: &str) -> Result<(), CliError> {
    if found != expected {
        return Err(CliError::Mismatch(format!(
            "{} was produced by config {found}, but the current config hashes to {expected}",
            path.display()
        )));
    }
    Ok(())
}

pub fn run_strategy(p: &Prepared, id: StrategyId) -> Result<BacktestResult, CliError> {
    let mut result = match id {
        StrategyId::Allocator(kind) => run_backtest(&mut p.cfg.allocator(kind), &p.test, p.cost(), p.cfg.window)?,
        StrategyId::Policy(kind) => evaluate(&policy_for(p, &p.cfg.output_dir, kind)?, &p.test, p.cost())?,
    };
    result.strategy = id.name().to_string();
    Ok(result)
}

fn write_result(p: &Prepared, out: &mut Artifacts, r: &BacktestResult) -> Result<(), CliError> {
    let mut curve = Vec::new();
    r.write_curve_csv(&mut curve)?;
    out.write(&format!("curve_{}.csv", r.strategy), &curve)?;
    let mut weights = Vec::new();
    r.write_weights_csv(&mut weights)?;
    out.write(&format!("weights_{}.csv", r.strategy), &weights)?;
    out.write_json(
        &format!("result_{}.json", r.strategy),
        &StoredResult { config_hash: p.config_hash.clone(), data_hash: p.data_hash.clone(), result: r.clone() },
    )?;
    Ok(())
}

fn write_table(p: &Prepared, out: &mut Artifacts, results: &[BacktestResult]) -> Result<String, CliError> {
    let table = MetricsTable {
        config_hash: p.config_hash.clone(),
        data_hash: p.data_hash.clone(),
        columns: METRIC_COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows: results.iter().map(|r| MetricsRow::new(&r.strategy, &r.metrics)).collect(),
    };
    out.write_json("metrics.json", &table)?;
    out.write("metrics.csv", table.to_csv().as_bytes())?;
    Ok(table.render())
}

fn backtest(p: &Prepared, out: &mut Artifacts) -> Result<Option<String>, CliError> {
    let [id] = p.cfg.strategies[..] else {
        return Err(CliError::Config(format!(
            "strategies: `backtest` runs exactly one strategy, {} selected (use `compare` for several)",
            p.cfg.strategies.len()
        )));
    };
    let result = run_strategy(p, id)?;
    write_result(p, out, &result)?;
    write_table(p, out, std::slice::from_ref(&result)).map(Some)
}

fn compare(p: &Prepared, out: &mut Artifacts) -> Result<Option<String>, CliError> {
    let outcomes: Vec<(StrategyId, Result<BacktestResult, CliError>)> =
        p.cfg.strategies.par_iter().map(|&id| (id, run_strategy(p, id))).collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => failures.push((id.name().to_string(), e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Strategies(failures));
    }
    for r in &results {
        write_result(p, out, r)?;
    }
    write_table(p, out, &results).map(Some)
}

/// Plot-ready series from the stored results: value curves and drawdowns with one column
/// per strategy, and cumulative weight bands per strategy for stack plots.
fn report(p: &Prepared, out: &mut Artifacts) -> Result<Option<String>, CliError> {
    let dir = p.cfg.output_dir.clone();
    let metrics_path = dir.join("metrics.json");
    if metrics_path.exists() {
        let table: MetricsTable = read_json(&metrics_path)?;
        check_hash(&metrics_path, &table.config_hash, &p.config_hash)?;
    }
    let mut results = Vec::new();
    for id in &p.cfg.strategies {
        let path = dir.join(format!("result_{id}.json"));
        if !path.exists() {
            return Err(CliError::Mismatch(format!("{} not found; run `backtest` or `compare` first", path.display())));
        }
        let stored: StoredResult = read_json(&path)?;
        check_hash(&path, &stored.config_hash, &p.config_hash)?;
        results.push(stored.result);
    }
    let dates = &results[0].dates;
    if results.iter().any(|r| &r.dates != dates) {
        return Err(CliError::Mismatch("stored results cover different test dates".into()));
    }
    let header: String = std::iter::once("date".to_string()).chain(results.iter().map(|r| r.strategy.clone())).collect::<Vec<_>>().join(",");
    let mut values = format!("{header}\n");
    let mut drawdowns = format!("{header}\n");
    let mut peaks: Vec<f64> = results.iter().map(|r| r.value_curve[0]).collect();
    for (k, d) in dates.iter().enumerate() {
        let _ = write!(values, "{d}");
        let _ = write!(drawdowns, "{d}");
        for (r, peak) in results.iter().zip(peaks.iter_mut()) {
            let v = r.value_curve[k + 1];
            *peak = peak.max(v);
            let _ = write!(values, ",{v}");
            let _ = write!(drawdowns, ",{}", 100.0 * (1.0 - v / *peak));
        }
        values.push('\n');
        drawdowns.push('\n');
    }
    out.write("plot_values.csv", values.as_bytes())?;
    out.write("plot_drawdowns.csv", drawdowns.as_bytes())?;
    for r in &results {
        let mut bands = format!("date,{}\n", r.tickers.join(","));
        for (d, w) in r.dates.iter().zip(&r.weights) {
            let _ = write!(bands, "{d}");
            let mut acc = 0.0;
            for &v in w.iter() {
                acc += v;
                let _ = write!(bands, ",{acc}");
            }
            bands.push('\n');
        }
        out.write(&format!("plot_stack_{}.csv", r.strategy), bands.as_bytes())?;
    }
    Ok(None)
}
