//! Pareto-smoothed importance-sampling leave-one-out (PSIS-LOO) and forward
//! selection of the latent dimension.

use serde::{Deserialize, Serialize};

use crate::domain::{ChoiceObservation, OptionPoint};
use crate::error::{Error, Result};
use crate::inference::{fit_choice_model, FitConfig, SurrogatePosterior};
use crate::likelihood::{compile, Workspace};

/// Observations with a fitted shape above this are flagged.
pub const KHAT_THRESHOLD: f64 = 0.7;
const MIN_SAMPLES: usize = 25;
const GRID_BASE: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub n_e: usize,
    pub n_samples: usize,
    pub per_obs_lpd: Vec<f64>,
    pub total: f64,
    /// Fitted tail shapes; a degenerate tail is `-inf` and serialises as
    /// `null`.
    #[serde(with = "nullable_floats")]
    pub khat: Vec<f64>,
    pub flagged: Vec<usize>,
}

impl LooReport {
    pub fn flagged_fraction(&self) -> f64 {
        if self.khat.is_empty() {
            0.0
        } else {
            self.flagged.len() as f64 / self.khat.len() as f64
        }
    }
}

mod nullable_floats {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| x.is_finite().then_some(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

/// Per-sample log-likelihoods of every observation, `[k][s]`.
fn per_sample_log_lik(post: &SurrogatePosterior, data: &[ChoiceObservation]) -> Result<Vec<Vec<f64>>> {
    let lik = post.likelihood()?;
    let compiled = compile(data, post.train_points().len())?;
    let mut ws = Workspace::default();
    compiled
        .iter()
        .map(|obs| {
            post.samples()
                .iter()
                .map(|s| lik.compiled_log_lik(obs, s.values(), &mut ws, None))
                .collect()
        })
        .collect()
}

/// Raw importance weights `1 / p(z_k | f⁽ˢ⁾)` of one training observation.
pub fn importance_weights(post: &SurrogatePosterior, obs: &ChoiceObservation) -> Result<Vec<f64>> {
    let ll = per_sample_log_lik(post, std::slice::from_ref(obs))?;
    Ok(ll[0].iter().map(|l| (-l).exp()).collect())
}

/// Smooths the upper tail of `weights` with a fitted generalized Pareto
/// distribution. Returns the smoothed weights and the fitted shape.
pub fn pareto_smooth(weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::param("importance weights must be positive and finite"));
    }
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let (smoothed, khat) = pareto_smooth_log(&log_w)?;
    if !khat.is_finite() {
        return Ok((weights.to_vec(), khat));
    }
    let out = smoothed
        .iter()
        .zip(&log_w)
        .zip(weights)
        .map(|((s, l), w)| if s == l { *w } else { s.exp() })
        .collect();
    Ok((out, khat))
}

/// Tail length used for `s` draws.
pub fn tail_length(s: usize) -> usize {
    let a = (0.2 * s as f64).ceil() as usize;
    let b = (3.0 * (s as f64).sqrt()).ceil() as usize;
    a.min(b)
}

fn pareto_smooth_log(log_w: &[f64]) -> Result<(Vec<f64>, f64)> {
    let s = log_w.len();
    if s < MIN_SAMPLES {
        return Err(Error::param(format!("Pareto smoothing needs at least {MIN_SAMPLES} weights, got {s}")));
    }
    let m = tail_length(s);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| log_w[a].total_cmp(&log_w[b]));
    let tail_idx = &order[s - m..];
    let cutoff = log_w[order[s - m - 1]];
    let max_lw = log_w[order[s - 1]];
    // Shift by the maximum to keep exponentials in range.
    let exp_cut = (cutoff - max_lw).exp();
    let tail: Vec<f64> = tail_idx.iter().map(|&i| (log_w[i] - max_lw).exp() - exp_cut).collect();
    if tail.iter().all(|&x| x <= 0.0) || tail[0] == tail[m - 1] {
        return Ok((log_w.to_vec(), f64::NEG_INFINITY));
    }
    let (k, sigma) = gpd_fit(&tail);
    let mut out = log_w.to_vec();
    if k.is_finite() && sigma > 0.0 {
        for (j, &i) in tail_idx.iter().enumerate() {
            let p = (j as f64 + 0.5) / m as f64;
            let q = gpd_quantile(p, k, sigma) + exp_cut;
            out[i] = q.ln().min(0.0) + max_lw;
        }
    }
    Ok((out, k))
}

/// Generalized Pareto fit to exceedances `x` (sorted ascending, all ≥ 0)
/// by the profile-likelihood grid of Zhang and Stephens with a weak prior
/// shrinking the shape towards 0.5. Returns `(shape, scale)`.
fn gpd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let prior = 3.0;
    let grid = GRID_BASE + (n as f64).sqrt() as usize;
    let xstar = x[((n as f64) / 4.0 + 0.5).floor() as usize - 1];
    let xmax = x[n - 1];
    let thetas: Vec<f64> = (1..=grid)
        .map(|j| 1.0 / xmax + (1.0 - (grid as f64 / (j as f64 - 0.5)).sqrt()) / prior / xstar)
        .collect();
    let profile = |theta: f64| -> f64 {
        let k = x.iter().map(|&xi| (-theta * xi).ln_1p()).sum::<f64>() / n as f64;
        n as f64 * ((-theta / k).ln() - k - 1.0)
    };
    let ll: Vec<f64> = thetas.iter().map(|&t| profile(t)).collect();
    let top = ll.iter().cloned().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, l) in thetas.iter().zip(&ll) {
        if l.is_finite() {
            let w = (l - top).exp();
            num += t * w;
            den += w;
        }
    }
    let theta_hat = num / den;
    let k = x.iter().map(|&xi| (-theta_hat * xi).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let k_adj = (n as f64 * k + 10.0 * 0.5) / (n as f64 + 10.0);
    (k_adj, sigma)
}

fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-12 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * (-k * (-p).ln_1p()).exp_m1() / k
    }
}

/// PSIS-LOO estimate of the expected log predictive density of every
/// training observation.
pub fn psis_loo(post: &SurrogatePosterior, data: &[ChoiceObservation]) -> Result<LooReport> {
    let ll = per_sample_log_lik(post, data)?;
    let mut per_obs = Vec::with_capacity(data.len());
    let mut khats = Vec::with_capacity(data.len());
    for row in &ll {
        let log_w: Vec<f64> = row.iter().map(|l| -l).collect();
        let (smoothed, khat) = pareto_smooth_log(&log_w)?;
        // log Σ w̃ p − log Σ w̃
        let a: Vec<f64> = smoothed.iter().zip(row).map(|(w, l)| w + l).collect();
        per_obs.push(log_sum_exp(&a) - log_sum_exp(&smoothed));
        khats.push(khat);
    }
    let flagged = khats
        .iter()
        .enumerate()
        .filter(|(_, k)| **k > KHAT_THRESHOLD)
        .map(|(i, _)| i)
        .collect();
    Ok(LooReport {
        n_e: post.n_e(),
        n_samples: post.n_samples(),
        total: per_obs.iter().sum(),
        per_obs_lpd: per_obs,
        khat: khats,
        flagged,
    })
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSelection {
    pub selected: usize,
    pub reports: Vec<LooReport>,
}

/// Forward selection: fits `n_e = 1, 2, …` and stops at the first
/// dimension whose PSIS-LOO total drops below its predecessor's, returning
/// the predecessor. Returns `ne_max` if the total never drops.
pub fn select_latent_dimension(
    data: &[ChoiceObservation],
    train_points: &[OptionPoint],
    ne_max: usize,
    config: &FitConfig,
) -> Result<DimensionSelection> {
    select_latent_dimension_with(data, train_points, ne_max, config, |_, _| {})
}

/// As [`select_latent_dimension`], handing each fitted posterior and its
/// report to `on_fit` as soon as the dimension completes.
pub fn select_latent_dimension_with(
    data: &[ChoiceObservation],
    train_points: &[OptionPoint],
    ne_max: usize,
    config: &FitConfig,
    mut on_fit: impl FnMut(&SurrogatePosterior, &LooReport),
) -> Result<DimensionSelection> {
    if ne_max == 0 {
        return Err(Error::param("ne_max must be at least 1"));
    }
    let mut reports: Vec<LooReport> = Vec::new();
    for n_e in 1..=ne_max {
        let (post, report) = fit_choice_model(data, train_points, n_e, config)
            .and_then(|post| psis_loo(&post, data).map(|r| (post, r)))
            .map_err(|e| Error::PartialSelection { n_e, completed: reports.clone(), source: Box::new(e) })?;
        on_fit(&post, &report);
        let dropped = reports.last().is_some_and(|prev| report.total < prev.total);
        reports.push(report);
        if dropped {
            return Ok(DimensionSelection { selected: n_e - 1, reports });
        }
    }
    Ok(DimensionSelection { selected: ne_max, reports })
}
