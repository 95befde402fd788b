//! Choice-function learning with Gaussian-process latent utilities and
//! choice-based multi-objective Bayesian optimisation.

pub mod benchmarks;
pub mod domain;
pub mod error;
pub mod gp;
pub mod inference;
pub mod likelihood;
pub mod mobo;
pub mod normal;
pub mod selection;

pub use error::{Error, Result};
