//! Minimal reverse-mode differentiation: tape, parameters, optimizers,
//! checkpoints and finite-difference checking.

mod checkpoint;
pub mod gradcheck;
mod optim;
mod param;
mod scalar;
mod tape;
mod tensor;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Descriptor, LoadedCheckpoint, StoredParam,
};
pub use optim::{optimizer_step, Optimizer};
pub use param::{Grads, ParamId, ParamSet, Parameter};
pub use scalar::Real;
pub use tape::{softmax, Conv2dSpec, Tape, Var};
pub use tensor::Tensor;
