//! Minimal tensor library: kernels, reverse-mode autograd, Adam and a
//! finite-difference gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod ops;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{check_gradients, gradient_check, Coords, GradCheckReport};
pub use graph::{Eager, Gradients, Graph, Tape, Var};
pub use layers::{checksum, conv, residual_block, ConvNodes, ConvParams, ParamSet, ResidualBlockParams, ResidualNodes};
pub use tensor::{Scalar, Tensor};
