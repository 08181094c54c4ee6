//! Reverse-mode autodiff and the MLP classifier built on it.

pub mod autodiff;
pub mod mlp;

pub use mlp::{
    accuracy, evaluate, init_params, loss, loss_and_grad, Activation, InitScheme, MlpBatchOracle, MlpSpec,
    ParamVector,
};
