//! Parameter estimation-based adaptive observer for LTI plants whose matrices
//! depend polynomially on an unknown parameter vector.
//!
//! The pipeline: canonical observer form of the plant, generalized PEBO
//! filters with dynamic regressor mixing, heterogeneous mappings that recover
//! the parameters and the canonical transform from a scalar regression, and
//! normalized gradient laws that reconstruct the state.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod gpebo;
pub mod harness;
pub mod linalg;
pub mod mappings;
pub mod observer;
pub mod par;
pub mod plant;
pub mod sim;

pub use config::{load_scenario, ScenarioConfig};
pub use error::{Error, Result};
pub use par::Execution;
