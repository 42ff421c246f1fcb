//! Simulation library for functional sequential treatment allocation with
//! covariates: the binned F-UCB policy, synthetic and adversarial environments,
//! and a reproducible regret harness.

pub mod environments;
pub mod error;
pub mod functionals;
pub mod harness;
pub mod partition;
pub mod policies;
pub mod rng;

pub use error::{LabError, Result};
