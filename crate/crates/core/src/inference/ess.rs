use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_training_data, FitConfig, SurrogatePosterior};
use crate::domain::{ChoiceObservation, OptionPoint};
use crate::error::{Error, Result};
use crate::gp::{GpModel, KernelParams, LatentMatrix};
use crate::likelihood::{compile, ChoiceLikelihood, LikelihoodConfig};

const MAX_REINIT: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EssDiagnostics {
    pub iterations: usize,
    /// Likelihood evaluations, one per proposal on the ellipse.
    pub likelihood_evals: usize,
    pub reinitialisations: usize,
    pub final_log_lik: f64,
}

impl EssDiagnostics {
    pub fn mean_proposals(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.likelihood_evals as f64 / self.iterations as f64
        }
    }
}

/// Elliptical slice sampling of the latents with fixed hyperparameters,
/// started from a prior draw.
pub fn sample_posterior(
    data: &[ChoiceObservation],
    train_points: &[OptionPoint],
    params: KernelParams,
    config: &FitConfig,
) -> Result<SurrogatePosterior> {
    sample_posterior_from(data, train_points, params, config, None)
}

/// As [`sample_posterior`], starting from whitened latents `init`
/// (`m × n_e`) when given.
pub fn sample_posterior_from(
    data: &[ChoiceObservation],
    train_points: &[OptionPoint],
    params: KernelParams,
    config: &FitConfig,
    init: Option<DMatrix<f64>>,
) -> Result<SurrogatePosterior> {
    config.validate()?;
    check_training_data(data, train_points)?;
    let model = GpModel::new(train_points, params.clone())?;
    let (m, n_e) = (model.n_train(), model.n_e());
    let lik = ChoiceLikelihood::new(LikelihoodConfig {
        noise_sd: params.noise_sd,
        quad_nodes: config.quad_nodes,
        log_floor: config.log_floor,
        ..LikelihoodConfig::default()
    })?;
    let compiled = compile(data, m)?;
    let log_lik = |u: &DMatrix<f64>| -> Result<f64> {
        let f = model.latents_from_whitened(u.clone())?;
        lik.compiled_dataset(&compiled, f.values(), None)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x0e55));
    let normal = |rng: &mut ChaCha8Rng| DMatrix::from_fn(m, n_e, |_, _| StandardNormal.sample(rng));

    let mut diag = EssDiagnostics::default();
    let mut u = match init {
        Some(u) if u.nrows() == m && u.ncols() == n_e => u,
        Some(u) => return Err(Error::Dimension { expected: m, got: u.nrows() }),
        None => normal(&mut rng),
    };
    let mut ll = log_lik(&u).unwrap_or(f64::NEG_INFINITY);
    while !ll.is_finite() {
        if diag.reinitialisations == MAX_REINIT {
            return Err(Error::Initialization(format!(
                "likelihood not finite after {MAX_REINIT} prior reinitialisations"
            )));
        }
        diag.reinitialisations += 1;
        u = normal(&mut rng);
        ll = log_lik(&u).unwrap_or(f64::NEG_INFINITY);
    }

    let total = config.ess_burnin + config.ess_samples * config.ess_thin;
    let mut samples = Vec::with_capacity(config.ess_samples);
    for it in 0..total {
        let nu = normal(&mut rng);
        let threshold = ll + rng.random::<f64>().ln();
        let mut theta = rng.random::<f64>() * 2.0 * PI;
        let (mut lo, mut hi) = (theta - 2.0 * PI, theta);
        loop {
            let (c, s) = (theta.cos(), theta.sin());
            let proposal = &u * c + &nu * s;
            let cand = log_lik(&proposal)?;
            diag.likelihood_evals += 1;
            if cand > threshold {
                u = proposal;
                ll = cand;
                break;
            }
            if theta < 0.0 {
                lo = theta;
            } else {
                hi = theta;
            }
            if hi - lo < 1e-12 {
                // Bracket collapsed onto the current state.
                break;
            }
            theta = lo + rng.random::<f64>() * (hi - lo);
        }
        diag.iterations += 1;
        if it >= config.ess_burnin && (it - config.ess_burnin + 1) % config.ess_thin == 0 {
            samples.push(LatentMatrix::from_whitened(u.clone(), model.factors())?);
        }
    }
    diag.final_log_lik = ll;
    SurrogatePosterior::from_parts(model, train_points.to_vec(), samples, diag, config.seed)
}
