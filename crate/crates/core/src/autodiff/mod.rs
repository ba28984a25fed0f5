//! Minimal reverse-mode automatic differentiation.

mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport, ParamCheck, FD_STEP};
pub use graph::{log_softmax, sigmoid, softmax, Activation, Graph, NodeId};
pub use optim::{adam_step, AdamConfig, OptimizerState};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::{Scalar, Tensor};
