//! Iterative co-simulation with a rollback-free step estimator.
//!
//! Systems are black-box ODEs driven by polynomial inputs. The master
//! iterates each macro-step to a fixed point on the coupling outputs. In
//! rollback mode each iteration re-integrates every system from a snapshot.
//! In estimator mode the iterations use a linearization taken at the start
//! of the step, pushed through the Laplace domain and inverted numerically,
//! and the systems integrate exactly once per step with the converged inputs.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod costarica;
mod dd;
pub mod error;
pub mod experiments;
pub mod laplace;
pub mod models;
pub mod orchestrator;
pub mod rational;
pub mod signals;
pub mod systems;

pub use error::{CosimError, Result};
