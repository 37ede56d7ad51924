//! Cost-aware portfolio simulation and summary metrics.

mod cost;
mod engine;
mod export;
mod metrics;

pub use cost::{portfolio_value_step, roll_weights, CostModel, StepOutcome, DEFAULT_COST_RATE};
pub use engine::{run_backtest, BacktestResult, FnStrategy, Strategy};
pub use export::RunSummary;
pub use metrics::{compute_metrics, metrics_from_parts, reward, reward_from_curve, MetricsBlock, TRADING_DAYS};
