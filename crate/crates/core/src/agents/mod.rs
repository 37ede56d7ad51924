//! Policy networks and the portfolio vector memory.

mod policy;
mod pvm;
mod weights;

pub use policy::{
    policy_forward, PolicyCheckpoint, PolicyHeader, PolicyKind, PolicyNodes, PolicyShape, PolicySpec, CNN_FIRST_KERNEL,
    CNN_FIRST_MAPS, DEFAULT_DROPOUT, DEFAULT_UNITS,
};
pub use pvm::{PortfolioVectorMemory, PVM_TAIL};
pub use weights::WeightVector;
