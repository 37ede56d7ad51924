//! Dense tensors, a reverse-mode differentiable computation graph, and Adam.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{adam_update, AdamConfig, AdamState, Direction};
pub use checkpoint::{ParamCheckpoint, ParamSet, CHECKPOINT_FORMAT_VERSION};
pub use gradcheck::{finite_difference_check, GradCheckReport, GRADCHECK_ABS_FLOOR};
pub use graph::{Graph, NodeId, OpKind};
pub use tensor::Tensor;
