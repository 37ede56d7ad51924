//! Portfolio allocation with deep reinforcement-learning policies and classical baselines.
//!
//! The crate is organised bottom-up:
//!
//! * [`market`] ingests and validates OHLC data, generates synthetic markets and builds the
//!   normalized price tensors and price relatives every strategy consumes.
//! * [`numerics`] is a small dense tensor library with reverse-mode differentiation and Adam.
//! * [`agents`] holds the CNN/RNN/LSTM policy networks and the portfolio vector memory (PVM).
//! * [`allocators`] implements equal weight, mean-variance, risk parity and minimum variance.
//! * [`backtest`] simulates a strategy under proportional transaction costs and reports metrics.
//! * [`trainer`] runs sequential mini-batch policy-gradient training.
//!
//! Numerical kernels are generic over [`Scalar`] (`f32` or `f64`). Market data and the training
//! pipeline run in `f64`; the aliases below name the concrete instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod agents;
pub mod allocators;
pub mod backtest;
mod error;
pub mod linalg;
pub mod market;
pub mod numerics;
mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use agents::{PolicyKind, PortfolioVectorMemory};
pub use backtest::{BacktestResult, CostModel, MetricsBlock};
pub use market::{PriceSeries, PriceTensor, RelativeVector};
pub use trainer::{TrainConfig, TrainHistory};

/// Scalar type used for prices, backtests and training.
pub type Real = f64;

pub type Tensor = numerics::Tensor<f64>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type Graph = numerics::Graph<f64>;
pub type Graph32 = numerics::Graph<f32>;
pub type AdamState = numerics::AdamState<f64>;
pub type WeightVector = agents::WeightVector<f64>;
pub type PolicySpec = agents::PolicySpec<f64>;
pub type PolicySpec32 = agents::PolicySpec<f32>;
pub type MomentEstimate = allocators::MomentEstimate<f64>;
pub type QpProblem = allocators::QpProblem<f64>;
pub type QpSolution = allocators::QpSolution<f64>;
