//! Experiment harness: dataset generation, accuracy and dimension-selection
//! studies, and benchmark BO runs against simulated agents.

pub mod commands;
pub mod config;
pub mod error;
pub mod oracle_gp;
pub mod output;
pub mod sources;

pub use config::RunConfig;
pub use error::{HarnessError, HarnessResult};
