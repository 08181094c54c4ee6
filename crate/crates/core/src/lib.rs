//! Runge-Kutta gradient updates for neural network training.

pub mod data;
pub mod error;
pub mod field;
pub mod harness;
pub mod model;
pub mod optimizers;
pub mod precondition;
pub mod rk;
pub mod step_control;
pub mod tableau;
pub mod vecops;

pub use error::{Error, Result};
