//! Likelihood of choice data under Gaussian-corrupted latent utilities.
//!
//! For an observation with chosen set `I` and rejected set `J` the
//! likelihood is a product of two kinds of factor:
//!
//! * one per rejected `j`: `1 − ∫ ∏_{i∈I} [1 − ∏_d Φ((Δ_di − v_d)/σ)] N(v; 0, σ²I) dv`
//!   with `Δ_di = f_d(x_i) − f_d(x_j)`;
//! * one per ordered chosen pair `(p, i)`: `1 − ∏_d Φ((f_d(x_p) − f_d(x_i)) / (√2σ))`.
//!
//! The rejection integral is expanded over subsets `S ⊆ I` by
//! inclusion-exclusion. Each subset term factorises over latent dimensions
//! into univariate integrals `∫ ∏_{i∈S} Φ((Δ_di − v)/σ) N(v; 0, σ²) dv`,
//! evaluated with Gauss-Hermite quadrature.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::ChoiceObservation;
use crate::error::{Error, Result};
use crate::gp::LatentMatrix;
use crate::normal::{norm_cdf, norm_pdf, GaussHermite};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodConfig {
    pub noise_sd: f64,
    pub quad_nodes: usize,
    pub log_floor: f64,
    /// Largest chosen set accepted by the inclusion-exclusion expansion.
    pub max_chosen: usize,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self { noise_sd: 0.1, quad_nodes: 32, log_floor: 1e-12, max_chosen: 12 }
    }
}

impl LikelihoodConfig {
    pub fn with_noise(noise_sd: f64) -> Self {
        Self { noise_sd, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd.is_finite() && self.noise_sd > 0.0) {
            return Err(Error::param(format!("noise sd must be positive, got {}", self.noise_sd)));
        }
        if self.quad_nodes < 8 {
            return Err(Error::param(format!("need at least 8 quadrature nodes, got {}", self.quad_nodes)));
        }
        if !(self.log_floor > 0.0 && self.log_floor <= 1e-6) {
            return Err(Error::param(format!("log floor must lie in (0, 1e-6], got {}", self.log_floor)));
        }
        if self.max_chosen == 0 || self.max_chosen > 20 {
            return Err(Error::param("max_chosen must lie in 1..=20"));
        }
        Ok(())
    }
}

/// `∏_d Φ((fp_d − fj_d) / (√2σ))`: probability that noisy `fp` weakly
/// dominates noisy `fj`.
pub fn pairwise_dominance_prob(fp: &[f64], fj: &[f64], sigma: f64) -> Result<f64> {
    if fp.len() != fj.len() {
        return Err(Error::Dimension { expected: fp.len(), got: fj.len() });
    }
    check_sigma(sigma)?;
    Ok(dominance_prob_unchecked(fp, fj, sigma))
}

#[inline]
pub(crate) fn dominance_prob_unchecked(fp: &[f64], fj: &[f64], sigma: f64) -> f64 {
    let scale = 1.0 / (SQRT2 * sigma);
    fp.iter().zip(fj).map(|(p, j)| norm_cdf((p - j) * scale)).product()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("noise sd must be positive, got {sigma}")))
    }
}

/// Reusable evaluator holding the quadrature rule.
#[derive(Debug, Clone)]
pub struct ChoiceLikelihood {
    config: LikelihoodConfig,
    rule: Arc<GaussHermite>,
}

/// An observation resolved to latent row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct CompiledObs {
    pub chosen: Vec<usize>,
    pub rejected: Vec<usize>,
}

impl CompiledObs {
    pub fn new(obs: &ChoiceObservation, rows: usize) -> Result<Self> {
        for &id in obs.set() {
            if id >= rows {
                return Err(Error::Index { index: id, len: rows });
            }
        }
        Ok(Self { chosen: obs.chosen().to_vec(), rejected: obs.rejected() })
    }
}

pub(crate) fn compile(data: &[ChoiceObservation], rows: usize) -> Result<Vec<CompiledObs>> {
    data.iter().map(|o| CompiledObs::new(o, rows)).collect()
}

/// Gradient of a log-likelihood with respect to the latent values and `σ`.
#[derive(Debug, Clone)]
pub struct LikelihoodGrad {
    pub latents: DMatrix<f64>,
    pub noise_sd: f64,
}

impl LikelihoodGrad {
    pub fn zeros(rows: usize, n_e: usize) -> Self {
        Self { latents: DMatrix::zeros(rows, n_e), noise_sd: 0.0 }
    }
}

impl ChoiceLikelihood {
    pub fn new(config: LikelihoodConfig) -> Result<Self> {
        config.validate()?;
        let rule = Arc::new(GaussHermite::new(config.quad_nodes));
        Ok(Self { config, rule })
    }

    pub fn config(&self) -> &LikelihoodConfig {
        &self.config
    }

    pub fn noise_sd(&self) -> f64 {
        self.config.noise_sd
    }

    /// Same quadrature rule with a different `σ`.
    pub fn with_noise(&self, noise_sd: f64) -> Result<Self> {
        check_sigma(noise_sd)?;
        let mut config = self.config.clone();
        config.noise_sd = noise_sd;
        Ok(Self { config, rule: Arc::clone(&self.rule) })
    }

    fn check_chosen(&self, size: usize) -> Result<()> {
        if size > self.config.max_chosen {
            Err(Error::Combinatorial { size, cap: self.config.max_chosen })
        } else {
            Ok(())
        }
    }

    /// Rejection integral for option `fj` against the chosen rows, clamped
    /// to `[0, 1]`.
    pub fn rejection_term(&self, f_chosen: &[Vec<f64>], fj: &[f64]) -> Result<f64> {
        if f_chosen.is_empty() {
            return Err(Error::EmptyInput("rejection term needs at least one chosen option"));
        }
        self.check_chosen(f_chosen.len())?;
        let n_e = fj.len();
        if let Some(bad) = f_chosen.iter().find(|r| r.len() != n_e) {
            return Err(Error::Dimension { expected: n_e, got: bad.len() });
        }
        let sigma = self.config.noise_sd;
        let a: Vec<f64> = f_chosen
            .iter()
            .flat_map(|row| row.iter().zip(fj).map(|(fi, fjd)| (fi - fjd) / sigma).collect::<Vec<_>>())
            .collect();
        let mut ws = Workspace::default();
        let factor = self.rejection_factor(&a, f_chosen.len(), n_e, &mut ws, None);
        Ok((1.0 - factor).clamp(0.0, 1.0))
    }

    /// Rejection factor `1 − rejection integral` given standardised gaps
    /// `a[i·n_e + d] = Δ_di / σ`. When `grad` is supplied, writes
    /// `∂factor/∂a` into it.
    fn rejection_factor(&self, a: &[f64], k: usize, n_e: usize, ws: &mut Workspace, grad: Option<&mut [f64]>) -> f64 {
        let nodes = self.rule.nodes();
        let weights = self.rule.weights();
        let q = nodes.len();
        let n_sub = 1usize << k;

        // Φ(a_id − z_n) and φ(a_id − z_n)
        ws.cdf.clear();
        ws.cdf.resize(k * n_e * q, 0.0);
        let want_grad = grad.is_some();
        if want_grad {
            ws.pdf.clear();
            ws.pdf.resize(k * n_e * q, 0.0);
        }
        for i in 0..k {
            for d in 0..n_e {
                let base = (i * n_e + d) * q;
                let aid = a[i * n_e + d];
                for n in 0..q {
                    let x = aid - nodes[n];
                    ws.cdf[base + n] = norm_cdf(x);
                    if want_grad {
                        ws.pdf[base + n] = norm_pdf(x);
                    }
                }
            }
        }

        // prod[d][mask][n] = ∏_{i∈mask} Φ(a_id − z_n); g[d][mask] = Σ_n w_n prod
        ws.prod.clear();
        ws.prod.resize(n_e * n_sub * q, 0.0);
        ws.g.clear();
        ws.g.resize(n_e * n_sub, 0.0);
        for d in 0..n_e {
            let dbase = d * n_sub * q;
            ws.prod[dbase..dbase + q].fill(1.0);
            ws.g[d * n_sub] = 1.0;
            for mask in 1..n_sub {
                let low = mask.trailing_zeros() as usize;
                let rest = mask & (mask - 1);
                let cdf_base = (low * n_e + d) * q;
                let mut acc = 0.0;
                for n in 0..q {
                    let v = ws.prod[dbase + rest * q + n] * ws.cdf[cdf_base + n];
                    ws.prod[dbase + mask * q + n] = v;
                    acc += weights[n] * v;
                }
                ws.g[d * n_sub + mask] = acc;
            }
        }

        // factor = Σ_{S≠∅} (−1)^{|S|+1} ∏_d G_d(S)
        let mut factor = 0.0;
        for mask in 1..n_sub {
            let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
            let mut term = sign;
            for d in 0..n_e {
                term *= ws.g[d * n_sub + mask];
            }
            factor += term;
        }

        if let Some(grad) = grad {
            grad[..k * n_e].fill(0.0);
            ws.others.clear();
            ws.others.resize(n_e, 0.0);
            for mask in 1..n_sub {
                let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
                // ∏_{d'≠d} G_{d'}(S) via prefix/suffix products
                let mut prefix = 1.0;
                for d in 0..n_e {
                    ws.others[d] = prefix;
                    prefix *= ws.g[d * n_sub + mask];
                }
                let mut suffix = 1.0;
                for d in (0..n_e).rev() {
                    ws.others[d] *= suffix;
                    suffix *= ws.g[d * n_sub + mask];
                }
                let mut bits = mask;
                while bits != 0 {
                    let i = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    let without = mask & !(1 << i);
                    for d in 0..n_e {
                        let dbase = d * n_sub * q;
                        let pdf_base = (i * n_e + d) * q;
                        let mut dg = 0.0;
                        for n in 0..q {
                            dg += weights[n] * ws.pdf[pdf_base + n] * ws.prod[dbase + without * q + n];
                        }
                        grad[i * n_e + d] += sign * ws.others[d] * dg;
                    }
                }
            }
        }
        factor
    }

    /// Log-likelihood of one observation; `grad`, when given, accumulates
    /// the gradient of the returned value.
    pub(crate) fn compiled_log_lik(
        &self,
        obs: &CompiledObs,
        values: &DMatrix<f64>,
        ws: &mut Workspace,
        mut grad: Option<&mut LikelihoodGrad>,
    ) -> Result<f64> {
        let sigma = self.config.noise_sd;
        let floor = self.config.log_floor;
        let n_e = values.ncols();
        let k = obs.chosen.len();
        self.check_chosen(k)?;
        let mut total = 0.0;

        let mut a = std::mem::take(&mut ws.a);
        let mut da = std::mem::take(&mut ws.da);
        for &j in &obs.rejected {
            a.clear();
            for &i in &obs.chosen {
                for d in 0..n_e {
                    a.push((values[(i, d)] - values[(j, d)]) / sigma);
                }
            }
            da.clear();
            da.resize(k * n_e, 0.0);
            let factor = self.rejection_factor(&a, k, n_e, ws, grad.as_ref().map(|_| da.as_mut_slice()));
            if factor > floor {
                let clamped = factor.min(1.0);
                total += clamped.ln();
                if let Some(g) = grad.as_deref_mut() {
                    if factor < 1.0 {
                        let inv = 1.0 / factor;
                        for (ci, &i) in obs.chosen.iter().enumerate() {
                            for d in 0..n_e {
                                let dfa = da[ci * n_e + d] * inv;
                                g.latents[(i, d)] += dfa / sigma;
                                g.latents[(j, d)] -= dfa / sigma;
                                g.noise_sd -= dfa * a[ci * n_e + d] / sigma;
                            }
                        }
                    }
                }
            } else {
                total += floor.ln();
            }
        }
        ws.a = a;
        ws.da = da;

        let scale = 1.0 / (SQRT2 * sigma);
        for &p in &obs.chosen {
            for &i in &obs.chosen {
                if p == i {
                    continue;
                }
                // 1 − ∏_d Φ(b_d) = −expm1(Σ_d ln Φ(b_d))
                let mut log_prod = 0.0;
                for d in 0..n_e {
                    let b = (values[(p, d)] - values[(i, d)]) * scale;
                    log_prod += (-norm_cdf(-b)).ln_1p();
                }
                let factor = -log_prod.exp_m1();
                if factor > floor {
                    total += factor.min(1.0).ln();
                    if let Some(g) = grad.as_deref_mut() {
                        let prod = log_prod.exp();
                        for d in 0..n_e {
                            let b = (values[(p, d)] - values[(i, d)]) * scale;
                            let cdf = norm_cdf(b);
                            if cdf <= 0.0 {
                                continue;
                            }
                            // ∂ln(1 − P)/∂b_d = −P φ(b_d) / (Φ(b_d) (1 − P))
                            let dlb = -prod * norm_pdf(b) / (cdf * factor);
                            g.latents[(p, d)] += dlb * scale;
                            g.latents[(i, d)] -= dlb * scale;
                            g.noise_sd -= dlb * b / sigma;
                        }
                    }
                } else {
                    total += floor.ln();
                }
            }
        }
        Ok(total)
    }

    /// Log-likelihood of one observation.
    pub fn observation(&self, obs: &ChoiceObservation, latents: &LatentMatrix) -> Result<f64> {
        let c = CompiledObs::new(obs, latents.rows())?;
        let mut ws = Workspace::default();
        self.compiled_log_lik(&c, latents.values(), &mut ws, None)
    }

    /// Sum of per-observation log-likelihoods.
    pub fn dataset(&self, data: &[ChoiceObservation], latents: &LatentMatrix) -> Result<f64> {
        let compiled = compile(data, latents.rows())?;
        self.compiled_dataset(&compiled, latents.values(), None)
    }

    pub(crate) fn compiled_dataset(
        &self,
        data: &[CompiledObs],
        values: &DMatrix<f64>,
        mut grad: Option<&mut LikelihoodGrad>,
    ) -> Result<f64> {
        let mut ws = Workspace::default();
        let mut total = 0.0;
        for obs in data {
            total += self.compiled_log_lik(obs, values, &mut ws, grad.as_deref_mut())?;
        }
        Ok(total)
    }

    /// Log-likelihood and its gradient with respect to latents and `σ`.
    pub fn dataset_with_grad(&self, data: &[ChoiceObservation], latents: &LatentMatrix) -> Result<(f64, LikelihoodGrad)> {
        let compiled = compile(data, latents.rows())?;
        let mut grad = LikelihoodGrad::zeros(latents.rows(), latents.n_e());
        let ll = self.compiled_dataset(&compiled, latents.values(), Some(&mut grad))?;
        Ok((ll, grad))
    }

    /// Single-winner form for one latent dimension:
    /// `∏_{j} ∫ Φ((f_w − f_j − v_j)/σ) N(v_j; 0, σ²) dv_j`, one quadrature per loser.
    pub fn batch_preference(&self, f_winner: f64, f_losers: &[f64]) -> f64 {
        let sigma = self.config.noise_sd;
        f_losers
            .iter()
            .map(|&fj| self.rule.expect(1.0, |z| norm_cdf((f_winner - fj) / sigma - z)))
            .product()
    }
}

/// Scratch buffers reused across likelihood evaluations.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    cdf: Vec<f64>,
    pdf: Vec<f64>,
    prod: Vec<f64>,
    g: Vec<f64>,
    others: Vec<f64>,
    a: Vec<f64>,
    da: Vec<f64>,
}

/// Rejection integral with an explicit quadrature node count.
pub fn rejection_term(f_chosen: &[Vec<f64>], fj: &[f64], sigma: f64, quad_nodes: usize) -> Result<f64> {
    let lik = ChoiceLikelihood::new(LikelihoodConfig { noise_sd: sigma, quad_nodes, ..LikelihoodConfig::default() })?;
    lik.rejection_term(f_chosen, fj)
}

/// Log-likelihood of one observation.
pub fn choice_log_likelihood(obs: &ChoiceObservation, latents: &LatentMatrix, config: &LikelihoodConfig) -> Result<f64> {
    ChoiceLikelihood::new(config.clone())?.observation(obs, latents)
}

/// Log-likelihood of a dataset: the sum over observations.
pub fn dataset_log_likelihood(
    data: &[ChoiceObservation],
    latents: &LatentMatrix,
    config: &LikelihoodConfig,
) -> Result<f64> {
    ChoiceLikelihood::new(config.clone())?.dataset(data, latents)
}

/// Direct simulation of the noisy choice events, used to check the
/// closed-form likelihood.
pub mod oracle {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    /// Monte Carlo estimate of an observation's likelihood and its binomial
    /// standard error.
    ///
    /// Every factor of the likelihood integrates its own noise vectors, so
    /// each factor's event is simulated with fresh noise; a draw succeeds
    /// when all factor events hold.
    pub fn mc_likelihood_oracle(
        obs: &ChoiceObservation,
        latents: &LatentMatrix,
        sigma: f64,
        n_draws: usize,
        seed: u64,
    ) -> Result<(f64, f64)> {
        if n_draws < 10_000 {
            return Err(Error::param(format!("oracle needs at least 1e4 draws, got {n_draws}")));
        }
        check_sigma(sigma)?;
        let c = CompiledObs::new(obs, latents.rows())?;
        let f = latents.values();
        let n_e = f.ncols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = |rng: &mut ChaCha8Rng| -> f64 {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        };
        let mut vj = vec![0.0; n_e];
        let mut hits = 0usize;
        for _ in 0..n_draws {
            let mut ok = true;
            // rejected j: some chosen i weakly beats j in every dimension
            'rej: for &j in &c.rejected {
                for d in 0..n_e {
                    vj[d] = noise(&mut rng);
                }
                let mut beaten = false;
                for &i in &c.chosen {
                    let mut min = f64::INFINITY;
                    for d in 0..n_e {
                        let gap = f[(i, d)] + noise(&mut rng) - f[(j, d)] - vj[d];
                        min = min.min(gap);
                    }
                    beaten |= min >= 0.0;
                }
                if !beaten {
                    ok = false;
                    break 'rej;
                }
            }
            if ok {
                'pairs: for &p in &c.chosen {
                    for &i in &c.chosen {
                        if p == i {
                            continue;
                        }
                        let mut min = f64::INFINITY;
                        for d in 0..n_e {
                            let gap = f[(p, d)] + noise(&mut rng) - f[(i, d)] - noise(&mut rng);
                            min = min.min(gap);
                        }
                        if min >= 0.0 {
                            ok = false;
                            break 'pairs;
                        }
                    }
                }
            }
            hits += usize::from(ok);
        }
        let n = n_draws as f64;
        let p = hits as f64 / n;
        Ok((p, (p * (1.0 - p) / n).sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lik(sigma: f64) -> ChoiceLikelihood {
        ChoiceLikelihood::new(LikelihoodConfig::with_noise(sigma)).unwrap()
    }

    #[test]
    fn pairwise_examples() {
        assert!((pairwise_dominance_prob(&[0.3, -1.0], &[0.3, -1.0], 0.2).unwrap() - 0.25).abs() < 1e-15);
        let sigma = 0.3;
        let p = pairwise_dominance_prob(&[SQRT2 * sigma], &[0.0], sigma).unwrap();
        assert!((p - 0.841_344_746_068_543).abs() < 1e-12);
        assert!(pairwise_dominance_prob(&[0.0], &[0.0], 0.0).is_err());
        assert!(pairwise_dominance_prob(&[0.0], &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn pairwise_matches_monte_carlo() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sigma = 0.1;
        let fp: Vec<f64> = (0..2).map(|_| rng.random_range(-0.15..0.15)).collect();
        let fj: Vec<f64> = (0..2).map(|_| rng.random_range(-0.15..0.15)).collect();
        let exact = pairwise_dominance_prob(&fp, &fj, sigma).unwrap();
        let n = 1_000_000;
        let mut hits = 0;
        for _ in 0..n {
            let ok = (0..2).all(|d| {
                let vp: f64 = StandardNormal.sample(&mut rng);
                let vj: f64 = StandardNormal.sample(&mut rng);
                fp[d] + sigma * vp - fj[d] - sigma * vj >= 0.0
            });
            hits += usize::from(ok);
        }
        let est = hits as f64 / n as f64;
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((est - exact).abs() < 3.0 * se, "{est} vs {exact}");
    }

    #[test]
    fn rejection_single_chosen_is_complement() {
        let l = lik(0.2);
        let fi = vec![0.4, -0.1];
        let fj = vec![0.1, 0.3];
        let r = l.rejection_term(&[fi.clone()], &fj).unwrap();
        let p = pairwise_dominance_prob(&fi, &fj, 0.2).unwrap();
        assert!((r - (1.0 - p)).abs() < 1e-12);
        let half = l.rejection_term(&[vec![0.7]], &[0.7]).unwrap();
        assert!((half - 0.5).abs() < 1e-12);
    }

    #[test]
    fn combinatorial_cap() {
        let l = lik(0.1);
        let chosen = vec![vec![0.0]; 13];
        assert!(matches!(l.rejection_term(&chosen, &[0.0]), Err(Error::Combinatorial { size: 13, cap: 12 })));
    }

    #[test]
    fn empty_products_and_two_option_reduction() {
        let l = lik(0.1);
        let lat = LatentMatrix::from_rows(&[vec![0.3], vec![0.3]]).unwrap();
        let single = ChoiceObservation::new(vec![0], vec![0]).unwrap();
        assert_eq!(l.observation(&single, &lat).unwrap(), 0.0);
        let pair = ChoiceObservation::new(vec![0, 1], vec![0]).unwrap();
        assert!((l.observation(&pair, &lat).unwrap() - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(l.dataset(&[], &lat).unwrap(), 0.0);
    }

    #[test]
    fn translation_invariance() {
        let l = lik(0.15);
        let rows = vec![vec![0.1, 0.5], vec![-0.2, 0.9], vec![0.3, -0.4], vec![0.0, 0.0]];
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] + 3.0, r[1] - 1.25]).collect();
        let obs = ChoiceObservation::new(vec![0, 1, 2, 3], vec![1, 2]).unwrap();
        let a = l.observation(&obs, &LatentMatrix::from_rows(&rows).unwrap()).unwrap();
        let b = l.observation(&obs, &LatentMatrix::from_rows(&shifted).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn floor_keeps_log_finite() {
        let l = lik(0.01);
        let lat = LatentMatrix::from_rows(&[vec![-5.0], vec![5.0]]).unwrap();
        let obs = ChoiceObservation::new(vec![0, 1], vec![0]).unwrap();
        let ll = l.observation(&obs, &lat).unwrap();
        assert!((ll - 1e-12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let l = lik(0.3);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..2).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
        let data = vec![
            ChoiceObservation::new(vec![0, 1, 2, 3, 4], vec![1, 3]).unwrap(),
            ChoiceObservation::new(vec![5, 2, 0], vec![2]).unwrap(),
            ChoiceObservation::new(vec![4, 5], vec![4, 5]).unwrap(),
        ];
        let lat = LatentMatrix::from_rows(&rows).unwrap();
        let (_, g) = l.dataset_with_grad(&data, &lat).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            for d in 0..2 {
                let mut up = rows.clone();
                up[i][d] += h;
                let mut dn = rows.clone();
                dn[i][d] -= h;
                let fd = (l.dataset(&data, &LatentMatrix::from_rows(&up).unwrap()).unwrap()
                    - l.dataset(&data, &LatentMatrix::from_rows(&dn).unwrap()).unwrap())
                    / (2.0 * h);
                assert!((fd - g.latents[(i, d)]).abs() < 1e-6 * (1.0 + fd.abs()), "({i},{d}) {fd} vs {}", g.latents[(i, d)]);
            }
        }
        let up = l.with_noise(0.3 + h).unwrap().dataset(&data, &lat).unwrap();
        let dn = l.with_noise(0.3 - h).unwrap().dataset(&data, &lat).unwrap();
        let fd = (up - dn) / (2.0 * h);
        assert!((fd - g.noise_sd).abs() < 1e-6 * (1.0 + fd.abs()), "{fd} vs {}", g.noise_sd);
    }

    #[test]
    fn quadrature_converged_at_32_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let coarse = lik(0.2);
        let fine = ChoiceLikelihood::new(LikelihoodConfig { quad_nodes: 64, ..LikelihoodConfig::with_noise(0.2) }).unwrap();
        for _ in 0..50 {
            let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let lat = LatentMatrix::from_rows(&rows).unwrap();
            let obs = ChoiceObservation::new(vec![0, 1, 2, 3, 4], vec![0, 2, 4]).unwrap();
            let a = coarse.observation(&obs, &lat).unwrap().exp();
            let b = fine.observation(&obs, &lat).unwrap().exp();
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn monotone_in_gap() {
        let l = lik(0.2);
        let obs = ChoiceObservation::new(vec![0, 1], vec![0]).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..40 {
            let gap = -1.0 + 0.05 * k as f64;
            let ll = l.observation(&obs, &LatentMatrix::from_rows(&[vec![gap], vec![0.0]]).unwrap()).unwrap();
            assert!(ll > prev);
            prev = ll;
        }
    }
}
