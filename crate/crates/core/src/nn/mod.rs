//! Dense numeric kernel: arrays, reverse-mode tape, MLPs, gradient checking
//! and the Adam optimizer.

pub mod adam;
pub mod array;
pub mod gradcheck;
pub mod mlp;
pub mod tape;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use array::{max_relative_error, DenseArray, GradientStore, ParameterStore};
pub use gradcheck::finite_diff_gradient;
pub use mlp::{mlp_forward, mlp_forward_tape, mlp_hidden, register_params, Activation, MlpSpec};
pub use tape::{log_softmax_rows, matmul, Tape, Var};
