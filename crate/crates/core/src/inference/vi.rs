use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_training_data, FitConfig, Hyperprior};
use crate::domain::{ChoiceObservation, OptionPoint};
use crate::error::{Error, Result};
use crate::gp::{cholesky_escalating, gram, KernelParams, BASE_JITTER};
use crate::likelihood::{compile, ChoiceLikelihood, CompiledObs, LikelihoodConfig, LikelihoodGrad};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const INIT_LOG_SD: f64 = -2.302_585_092_994_046; // ln 0.1

/// Output of [`fit_hyperparameters`].
#[derive(Debug, Clone)]
pub struct HyperFit {
    pub params: KernelParams,
    pub elbo_trace: Vec<f64>,
    pub state: VariationalState,
}

/// Flat variational parameters `λ = [μ_u, ρ_u, μ_θ, ρ_θ]`, where the
/// standard deviations are `exp(ρ)`.
///
/// `u` is stored column-major (`m × n_e`). `θ` holds, per latent dimension,
/// the log lengthscales followed by the log signal variance, and ends with
/// `log σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub m: usize,
    pub n_e: usize,
    pub n_ls: usize,
    pub lambda: Vec<f64>,
}

impl VariationalState {
    pub fn from_prior(m: usize, n_e: usize, n_ls: usize, prior: &Hyperprior) -> Self {
        let mu = m * n_e;
        let p = n_theta(n_e, n_ls);
        let mut lambda = vec![0.0; 2 * mu + 2 * p];
        lambda[mu..2 * mu].fill(INIT_LOG_SD);
        for d in 0..n_e {
            let base = 2 * mu + d * (n_ls + 1);
            lambda[base..base + n_ls].fill(prior.lengthscale.log_median());
            lambda[base + n_ls] = prior.signal_variance.log_median();
        }
        lambda[2 * mu + p - 1] = prior.noise_sd.log_median();
        lambda[2 * mu + p..].fill(INIT_LOG_SD);
        Self { m, n_e, n_ls, lambda }
    }

    pub fn n_theta(&self) -> usize {
        n_theta(self.n_e, self.n_ls)
    }

    fn mu_u(&self) -> usize {
        0
    }

    fn rho_u(&self) -> usize {
        self.m * self.n_e
    }

    fn mu_t(&self) -> usize {
        2 * self.m * self.n_e
    }

    fn rho_t(&self) -> usize {
        2 * self.m * self.n_e + self.n_theta()
    }

    /// Hyperparameters at the variational means of their logs.
    pub fn hyper_means(&self) -> Result<KernelParams> {
        let t = &self.lambda[self.mu_t()..self.rho_t()];
        kernel_params_of(t, self.n_e, self.n_ls)
    }

    /// Variational mean of the whitened latents.
    pub fn latent_mean(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.m, self.n_e, &self.lambda[..self.m * self.n_e])
    }

    /// One draw of the whitened latents from the variational factor.
    pub fn sample_latent_init(&self, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.m * self.n_e;
        DMatrix::from_fn(self.m, self.n_e, |i, d| {
            let k = d * self.m + i;
            let z: f64 = StandardNormal.sample(&mut rng);
            self.lambda[k] + self.lambda[n + k].exp() * z
        })
    }

    /// The same state over `m_new ≥ m` training points. Whitened
    /// coordinates of the first `m` points are unchanged by appending rows
    /// to a Cholesky factor, so their factors are kept.
    pub fn extended(&self, m_new: usize) -> Result<Self> {
        if m_new < self.m {
            return Err(Error::param("cannot shrink a variational state"));
        }
        let mut fresh = Self { m: m_new, n_e: self.n_e, n_ls: self.n_ls, lambda: vec![0.0; 0] };
        let mut lambda = vec![0.0; 2 * m_new * self.n_e + 2 * self.n_theta()];
        for d in 0..self.n_e {
            for i in 0..m_new {
                let (mu, rho) = if i < self.m {
                    let k = d * self.m + i;
                    (self.lambda[k], self.lambda[self.rho_u() + k])
                } else {
                    (0.0, INIT_LOG_SD)
                };
                lambda[d * m_new + i] = mu;
                lambda[m_new * self.n_e + d * m_new + i] = rho;
            }
        }
        fresh.lambda = lambda;
        let (src, dst) = (self.mu_t(), fresh.mu_t());
        let len = 2 * self.n_theta();
        fresh.lambda[dst..dst + len].copy_from_slice(&self.lambda[src..src + len]);
        Ok(fresh)
    }
}

fn n_theta(n_e: usize, n_ls: usize) -> usize {
    n_e * (n_ls + 1) + 1
}

fn kernel_params_of(theta: &[f64], n_e: usize, n_ls: usize) -> Result<KernelParams> {
    let mut ls = Vec::with_capacity(n_e);
    let mut var = Vec::with_capacity(n_e);
    for d in 0..n_e {
        let base = d * (n_ls + 1);
        ls.push(theta[base..base + n_ls].iter().map(|v| v.exp()).collect());
        var.push(theta[base + n_ls].exp());
    }
    KernelParams::new(ls, var, theta[theta.len() - 1].exp())
}

/// Reparameterised ELBO for a fixed dataset, exposed so its gradient can
/// be checked against finite differences.
pub struct ElboObjective {
    data: Vec<CompiledObs>,
    coords: Vec<Vec<f64>>,
    n_e: usize,
    n_ls: usize,
    prior: Hyperprior,
    lik: ChoiceLikelihood,
}

impl ElboObjective {
    pub fn new(
        data: &[ChoiceObservation],
        train_points: &[OptionPoint],
        n_e: usize,
        config: &FitConfig,
    ) -> Result<Self> {
        check_training_data(data, train_points)?;
        if n_e == 0 {
            return Err(Error::param("n_e must be at least 1"));
        }
        let n_x = train_points[0].dim();
        let lik = ChoiceLikelihood::new(LikelihoodConfig {
            noise_sd: config.hyperprior.noise_sd.median,
            quad_nodes: config.quad_nodes,
            log_floor: config.log_floor,
            ..LikelihoodConfig::default()
        })?;
        Ok(Self {
            data: compile(data, train_points.len())?,
            coords: train_points.iter().map(|p| p.coords.clone()).collect(),
            n_e,
            n_ls: if config.ard { n_x } else { 1 },
            prior: config.hyperprior,
            lik,
        })
    }

    pub fn initial_state(&self) -> VariationalState {
        VariationalState::from_prior(self.coords.len(), self.n_e, self.n_ls, &self.prior)
    }

    /// ELBO estimate and its gradient in `λ` for fixed standard-normal
    /// draws: `eps_u[s]` is `m × n_e`, `eps_t` has one entry per
    /// hyperparameter. One hyperparameter draw is shared by all latent
    /// draws.
    pub fn evaluate(&self, state: &VariationalState, eps_u: &[DMatrix<f64>], eps_t: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (m, n_e, n_ls) = (state.m, state.n_e, state.n_ls);
        if m != self.coords.len() || n_e != self.n_e || n_ls != self.n_ls {
            return Err(Error::param("variational state does not match the objective"));
        }
        let p = state.n_theta();
        if eps_t.len() != p || eps_u.is_empty() {
            return Err(Error::param("bad reparameterisation draws"));
        }
        let lam = &state.lambda;
        let (o_mu_u, o_rho_u, o_mu_t, o_rho_t) = (state.mu_u(), state.rho_u(), state.mu_t(), state.rho_t());
        let mut grad = vec![0.0; lam.len()];

        let theta: Vec<f64> = (0..p).map(|t| lam[o_mu_t + t] + lam[o_rho_t + t].exp() * eps_t[t]).collect();
        let sigma = theta[p - 1].exp();
        let lik = self.lik.with_noise(sigma)?;

        let mut chols = Vec::with_capacity(n_e);
        for d in 0..n_e {
            let base = d * (n_ls + 1);
            let ls: Vec<f64> = theta[base..base + n_ls].iter().map(|v| v.exp()).collect();
            let var = theta[base + n_ls].exp();
            let k = gram(&self.coords, &ls, var);
            let (l, jitter) = cholesky_escalating(&k, BASE_JITTER * var)?;
            chols.push((ls, var, k, l, jitter));
        }

        let s_n = eps_u.len();
        let inv_s = 1.0 / s_n as f64;
        let mut g_cols: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, s_n); n_e];
        let mut u_cols: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, s_n); n_e];
        let mut dtheta = vec![0.0; p];
        let mut ll_mean = 0.0;
        let mut f = DMatrix::zeros(m, n_e);
        for (s, eps) in eps_u.iter().enumerate() {
            for d in 0..n_e {
                for i in 0..m {
                    let k = d * m + i;
                    u_cols[d][(i, s)] = lam[o_mu_u + k] + lam[o_rho_u + k].exp() * eps[(i, d)];
                }
                let fd = &chols[d].3 * u_cols[d].column(s);
                f.set_column(d, &fd);
            }
            let mut g = LikelihoodGrad::zeros(m, n_e);
            let ll = lik.compiled_dataset(&self.data, &f, Some(&mut g))?;
            ll_mean += ll * inv_s;
            dtheta[p - 1] += g.noise_sd * sigma * inv_s;
            for d in 0..n_e {
                let gd = g.latents.column(d);
                g_cols[d].set_column(s, &gd);
                let gu = chols[d].3.tr_mul(&gd);
                for i in 0..m {
                    let k = d * m + i;
                    grad[o_mu_u + k] += gu[i] * inv_s;
                    grad[o_rho_u + k] += gu[i] * eps[(i, d)] * lam[o_rho_u + k].exp() * inv_s;
                }
            }
        }

        for d in 0..n_e {
            let (ls, var, k, l, jitter) = &chols[d];
            let mut lbar = &g_cols[d] * u_cols[d].transpose() * inv_s;
            lbar.fill_upper_triangle(0.0, 1);
            let kbar = cholesky_adjoint(l, &lbar);
            let base = d * (n_ls + 1);
            let mut dvar = 0.0;
            for j in 0..m {
                dvar += kbar[(j, j)] * (k[(j, j)] + jitter);
                for i in j + 1..m {
                    let w = 2.0 * kbar[(i, j)];
                    dvar += w * k[(i, j)];
                    let (xi, xj) = (&self.coords[i], &self.coords[j]);
                    let r = crate::gp::scaled_sq_dist(xi, xj, ls).sqrt();
                    let c = w * 3.0 * var * (-SQRT3 * r).exp();
                    if n_ls == 1 {
                        dtheta[base] += c * r * r;
                    } else {
                        for a in 0..n_ls {
                            let t = (xi[a] - xj[a]) / ls[a];
                            dtheta[base + a] += c * t * t;
                        }
                    }
                }
            }
            dtheta[base + n_ls] += dvar;
        }

        // −KL(q(u) ‖ N(0, I)), elementwise
        let mut elbo = ll_mean;
        for k in 0..m * n_e {
            let (mu, rho) = (lam[o_mu_u + k], lam[o_rho_u + k]);
            let s2 = (2.0 * rho).exp();
            elbo += 0.5 - 0.5 * (mu * mu + s2) + rho;
            grad[o_mu_u + k] -= mu;
            grad[o_rho_u + k] += 1.0 - s2;
        }
        for t in 0..p {
            let prior = self.prior_of(t);
            let (m0, s0) = (prior.log_median(), prior.log_sd);
            let (mu, rho) = (lam[o_mu_t + t], lam[o_rho_t + t]);
            let s2 = (2.0 * rho).exp();
            let v0 = s0 * s0;
            elbo += rho - s0.ln() - (s2 + (mu - m0) * (mu - m0)) / (2.0 * v0) + 0.5;
            grad[o_mu_t + t] += dtheta[t] - (mu - m0) / v0;
            grad[o_rho_t + t] += dtheta[t] * eps_t[t] * rho.exp() + 1.0 - s2 / v0;
        }
        Ok((elbo, grad))
    }

    fn prior_of(&self, t: usize) -> super::LogNormalPrior {
        let p = n_theta(self.n_e, self.n_ls);
        if t == p - 1 {
            self.prior.noise_sd
        } else if t % (self.n_ls + 1) == self.n_ls {
            self.prior.signal_variance
        } else {
            self.prior.lengthscale
        }
    }
}

/// Symmetric gradient `K̄` of a scalar with respect to `K = L Lᵀ`, given
/// its gradient `L̄` with respect to the lower factor.
fn cholesky_adjoint(l: &DMatrix<f64>, lbar: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut p = l.tr_mul(lbar);
    for j in 0..n {
        p[(j, j)] *= 0.5;
        for i in 0..j {
            p[(i, j)] = 0.0;
        }
    }
    let s = (&p + p.transpose()) * 0.5;
    let y = l.tr_solve_lower_triangular(&s).expect("non-singular factor");
    let xt = l.tr_solve_lower_triangular(&y.transpose()).expect("non-singular factor");
    (&xt + xt.transpose()) * 0.5
}

/// Learns kernel hyperparameters and `σ` by maximising the ELBO with Adam.
///
/// Returns hyperparameters at the exponentiated variational means. With no
/// data the prior is already optimal and the hyperprior medians are
/// returned with a single-entry zero trace.
pub fn fit_hyperparameters(
    data: &[ChoiceObservation],
    train_points: &[OptionPoint],
    n_e: usize,
    config: &FitConfig,
) -> Result<HyperFit> {
    fit_hyperparameters_from(data, train_points, n_e, config, None)
}

/// As [`fit_hyperparameters`], optionally warm-starting from a previous
/// state over a prefix of the training points.
pub fn fit_hyperparameters_from(
    data: &[ChoiceObservation],
    train_points: &[OptionPoint],
    n_e: usize,
    config: &FitConfig,
    warm: Option<&VariationalState>,
) -> Result<HyperFit> {
    config.validate()?;
    let objective = ElboObjective::new(data, train_points, n_e, config)?;
    let mut state = match warm {
        Some(w) if w.n_e == n_e && w.n_ls == objective.n_ls => w.extended(train_points.len())?,
        _ => objective.initial_state(),
    };
    if data.is_empty() {
        let state = objective.initial_state();
        return Ok(HyperFit { params: state.hyper_means()?, elbo_trace: vec![0.0], state });
    }

    let n = state.lambda.len();
    let p = state.n_theta();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let mut trace = Vec::with_capacity(config.vi_steps);
    let mut last_finite = state.hyper_means()?;
    let half = config.vi_steps / 2;
    for step in 0..config.vi_steps {
        let eps_t: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let eps_u: Vec<DMatrix<f64>> = (0..config.vi_mc_samples)
            .map(|_| DMatrix::from_fn(state.m, n_e, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let diverged = || Error::Divergence { step, last_finite: Box::new(last_finite.clone()) };
        let (elbo, grad) = match objective.evaluate(&state, &eps_u, &eps_t) {
            Ok(v) => v,
            Err(Error::Factorization { .. }) | Err(Error::Parameter(_)) => return Err(diverged()),
            Err(e) => return Err(e),
        };
        if !elbo.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(diverged());
        }
        trace.push(elbo);

        // Constant rate for the first half, then linear decay to 10%.
        let lr = if step < half {
            config.vi_step_size
        } else {
            let frac = (step - half) as f64 / (config.vi_steps - half).max(1) as f64;
            config.vi_step_size * (1.0 - 0.9 * frac)
        };
        let t = (step + 1) as i32;
        let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        for k in 0..n {
            m1[k] = b1 * m1[k] + (1.0 - b1) * grad[k];
            m2[k] = b2 * m2[k] + (1.0 - b2) * grad[k] * grad[k];
            state.lambda[k] += lr * (m1[k] / c1) / ((m2[k] / c2).sqrt() + eps);
        }
        match state.hyper_means() {
            Ok(p) => last_finite = p,
            Err(_) => return Err(diverged()),
        }
    }
    Ok(HyperFit { params: state.hyper_means()?, elbo_trace: trace, state })
}
