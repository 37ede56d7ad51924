//! Classical baselines: equal weight, mean-variance, risk parity and minimum variance.

mod moments;
mod portfolio;
mod qp;
mod strategies;

pub use moments::{estimate_moments, MomentEstimate, COVARIANCE_JITTER, DEFAULT_LOOKBACK};
pub use portfolio::{
    default_baseline, equal_weight, mean_variance, mean_variance_solution, min_variance, min_variance_solution,
    min_variance_vol_target, risk_contributions, risk_parity, risk_parity_gap, risk_parity_objective, RISK_PARITY_TOL,
};
pub use qp::{kkt_residuals, qp_solve, KktResiduals, QpProblem, QpSolution, MAX_ITERATIONS};
pub use strategies::{AllocatorKind, AllocatorStrategy};
