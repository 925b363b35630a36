//! Two-layer convolutional networks as exact finite-difference
//! semi-discretizations of 2-D PDEs with quadratic nonlinearities, with
//! rollout training, norm-preserving integration, reference data generation
//! and error metrics.

pub mod datagen;
pub mod error;
pub mod integrators;
pub mod metrics;
pub mod network;
pub mod stencils;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
