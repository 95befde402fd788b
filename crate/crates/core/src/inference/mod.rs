//! Two-stage posterior computation.
//!
//! Kernel hyperparameters and `σ` are learned by mean-field variational
//! inference over whitened latents and log-hyperparameters. With the
//! hyperparameters fixed at their variational means, the latent posterior
//! is then sampled by elliptical slice sampling in whitened coordinates.

mod ess;
mod posterior;
mod vi;

use serde::{Deserialize, Serialize};

use crate::domain::{ChoiceObservation, OptionPoint};
use crate::error::{Error, Result};

pub use ess::{sample_posterior, sample_posterior_from, EssDiagnostics};
pub use posterior::{
    choice_probability, modal_pareto_subset, predict_choice, predict_latents, PosteriorDiagnostics,
    SurrogatePosterior, MODEL_SCHEMA_VERSION,
};
pub use vi::{fit_hyperparameters, fit_hyperparameters_from, ElboObjective, HyperFit, VariationalState};

/// Log-normal prior, parameterised by its median and the standard
/// deviation of the log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalPrior {
    pub median: f64,
    pub log_sd: f64,
}

impl LogNormalPrior {
    pub fn log_median(&self) -> f64 {
        self.median.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperprior {
    pub lengthscale: LogNormalPrior,
    pub signal_variance: LogNormalPrior,
    pub noise_sd: LogNormalPrior,
}

impl Default for Hyperprior {
    fn default() -> Self {
        Self {
            lengthscale: LogNormalPrior { median: 0.3, log_sd: 1.0 },
            signal_variance: LogNormalPrior { median: 1.0, log_sd: 1.0 },
            noise_sd: LogNormalPrior { median: 0.1, log_sd: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub vi_steps: usize,
    pub vi_mc_samples: usize,
    pub vi_step_size: f64,
    pub ess_burnin: usize,
    pub ess_samples: usize,
    pub ess_thin: usize,
    pub hyperprior: Hyperprior,
    /// One lengthscale per input coordinate when true.
    pub ard: bool,
    pub quad_nodes: usize,
    pub log_floor: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            vi_steps: 3000,
            vi_mc_samples: 8,
            vi_step_size: 0.02,
            ess_burnin: 500,
            ess_samples: 1000,
            ess_thin: 2,
            hyperprior: Hyperprior::default(),
            ard: true,
            quad_nodes: 32,
            log_floor: 1e-12,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vi_steps", self.vi_steps),
            ("vi_mc_samples", self.vi_mc_samples),
            ("ess_samples", self.ess_samples),
            ("ess_thin", self.ess_thin),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::param(format!("{name} must be at least 1")));
            }
        }
        if !(self.vi_step_size > 0.0 && self.vi_step_size.is_finite()) {
            return Err(Error::param("vi_step_size must be positive"));
        }
        Ok(())
    }
}

/// Fits hyperparameters, then samples the latent posterior starting from a
/// draw of the variational latent factor.
pub fn fit_choice_model(
    data: &[ChoiceObservation],
    train_points: &[OptionPoint],
    n_e: usize,
    config: &FitConfig,
) -> Result<SurrogatePosterior> {
    let fit = fit_hyperparameters(data, train_points, n_e, config)?;
    let init = fit.state.sample_latent_init(config.seed ^ 0x5eed_e55);
    let mut post = sample_posterior_from(data, train_points, fit.params.clone(), config, Some(init))?;
    post.set_elbo_trace(fit.elbo_trace);
    Ok(post)
}

/// Checks that training ids are exactly `0..m` and every observation
/// refers to them.
pub(crate) fn check_training_data(data: &[ChoiceObservation], train_points: &[OptionPoint]) -> Result<()> {
    if train_points.is_empty() {
        return Err(Error::EmptyInput("no training options"));
    }
    let n_x = train_points[0].dim();
    for (i, p) in train_points.iter().enumerate() {
        if p.id != i {
            return Err(Error::param(format!("training option at position {i} has id {}", p.id)));
        }
        if p.dim() != n_x {
            return Err(Error::Dimension { expected: n_x, got: p.dim() });
        }
    }
    for obs in data {
        for &id in obs.set() {
            if id >= train_points.len() {
                return Err(Error::Index { index: id, len: train_points.len() });
            }
        }
    }
    Ok(())
}
