//! Model predictive control with noisy predictions on time-varying systems.
//!
//! The crate solves finite-horizon optimal control problems exactly, runs receding-horizon
//! control on predicted parameters, measures how solutions react to perturbations, and checks
//! the resulting per-step-error and dynamic-regret inequalities on concrete instances.

pub mod assumptions;
pub mod controllability;
pub mod error;
pub mod examples;
pub mod export;
pub mod fit;
pub mod ftocp;
pub mod instance;
pub mod kkt;
pub mod linalg;
pub mod mpc;
pub mod param;
pub mod regret;
pub mod system;

pub use error::{Error, Result};
