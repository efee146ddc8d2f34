//! Minimal dense numeric kernel: matrices, activations, an MLP with
//! hand-written backward passes, optimizers, and the finite-difference
//! gradient oracle the test suites are built on.

pub mod fd;
pub mod matrix;
pub mod mlp;
pub mod ops;
pub mod optim;

pub use fd::{finite_difference_gradient, relative_error};
pub use matrix::DenseMatrix;
pub use mlp::{
    BatchNormParams, ForwardMode, MlpGradients, MlpLayer, MlpParams, MlpTape, OutputActivation,
};
pub use ops::{bce_per_instance, clamp_prob, sigmoid, softmax, PROB_CLAMP};
pub use optim::{adam_step, AdamConfig, AdamState, Optimizer, OptimizerConfig};
