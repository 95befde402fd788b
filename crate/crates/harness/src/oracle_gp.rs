//! Oracle-GP: independent exact GP regression on each objective, with
//! direct access to noisy objective values. Used as the comparator in
//! accuracy experiments.

use choicebo_core::domain::{ChoiceObservation, OptionPoint};
use choicebo_core::gp::{cholesky_escalating, cross_gram, gram, BASE_JITTER};
use choicebo_core::inference::modal_pareto_subset;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::OracleGpConfig;
use crate::error::{HarnessError, HarnessResult};

/// Smallest noise sd, relative to the target sd, used in the fit.
pub const NOISE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
struct OutputFit {
    y_mean: f64,
    y_sd: f64,
    lengthscale: f64,
    variance: f64,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    log_marginal: f64,
}

#[derive(Debug, Clone)]
pub struct OracleGp {
    train: Vec<Vec<f64>>,
    outputs: Vec<OutputFit>,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo * hi).sqrt()];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

impl OracleGp {
    /// Fits one isotropic Matérn-3/2 GP per column of `y`, choosing the
    /// lengthscale and signal variance with the largest log marginal
    /// likelihood on the grid. `noise_sd` is the known observation noise.
    pub fn fit(x: &[Vec<f64>], y: &[Vec<f64>], noise_sd: f64, cfg: &OracleGpConfig) -> HarnessResult<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(HarnessError::Config(format!("Oracle-GP needs matching inputs and targets, got {} and {}", x.len(), y.len())));
        }
        if cfg.n_lengthscales == 0 || cfg.n_variances == 0 || cfg.n_draws == 0 {
            return Err(HarnessError::Config("Oracle-GP grids and draw count must be positive".into()));
        }
        let span = (0..x[0].len())
            .map(|d| {
                let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[d]), hi.max(r[d])));
                hi - lo
            })
            .fold(0.0, f64::max)
            .max(1e-12);
        let lengthscales = log_grid(cfg.lengthscale_range[0] * span, cfg.lengthscale_range[1] * span, cfg.n_lengthscales);
        let variances = log_grid(cfg.variance_range[0], cfg.variance_range[1], cfg.n_variances);
        let n_o = y[0].len();
        let mut outputs = Vec::with_capacity(n_o);
        for d in 0..n_o {
            let col: Vec<f64> = y.iter().map(|r| r[d]).collect();
            let n = col.len() as f64;
            let y_mean = col.iter().sum::<f64>() / n;
            let y_sd = (col.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
            let ys = DVector::from_iterator(col.len(), col.iter().map(|v| (v - y_mean) / y_sd));
            let noise_var = (noise_sd / y_sd).max(NOISE_FLOOR).powi(2);
            let mut best: Option<OutputFit> = None;
            for &ls in &lengthscales {
                let base = gram(x, &[ls], 1.0);
                for &var in &variances {
                    let mut k = base.scale(var);
                    for i in 0..k.nrows() {
                        k[(i, i)] += noise_var;
                    }
                    let Ok((chol, _)) = cholesky_escalating(&k, 0.0) else { continue };
                    let alpha = solve_chol(&chol, &ys);
                    let log_marginal = -0.5 * ys.dot(&alpha)
                        - chol.diagonal().iter().map(|v| v.ln()).sum::<f64>()
                        - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
                    if best.as_ref().is_none_or(|b| log_marginal > b.log_marginal) {
                        best = Some(OutputFit { y_mean, y_sd, lengthscale: ls, variance: var, chol, alpha, log_marginal });
                    }
                }
            }
            outputs.push(best.ok_or_else(|| HarnessError::Numeric("Oracle-GP: no grid point factorised".into()))?);
        }
        Ok(Self { train: x.to_vec(), outputs })
    }

    /// Chosen `(lengthscale, signal variance)` per output, in standardised
    /// target units.
    pub fn hyperparameters(&self) -> Vec<(f64, f64)> {
        self.outputs.iter().map(|o| (o.lengthscale, o.variance)).collect()
    }

    /// Posterior mean of the noise-free objectives at `test`.
    pub fn mean(&self, test: &[Vec<f64>]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(test.len(), self.outputs.len());
        for (d, o) in self.outputs.iter().enumerate() {
            let ks = cross_gram(&self.train, test, &[o.lengthscale], o.variance);
            let m = ks.transpose() * &o.alpha;
            for i in 0..test.len() {
                out[(i, d)] = o.y_mean + o.y_sd * m[i];
            }
        }
        out
    }

    /// Joint posterior draws of the noise-free objectives at `test`, each
    /// `test.len() × n_o`.
    pub fn draws<R: Rng + ?Sized>(&self, test: &[Vec<f64>], n: usize, rng: &mut R) -> HarnessResult<Vec<DMatrix<f64>>> {
        let mut out = vec![DMatrix::zeros(test.len(), self.outputs.len()); n];
        for (d, o) in self.outputs.iter().enumerate() {
            let ks = cross_gram(&self.train, test, &[o.lengthscale], o.variance);
            let mean = ks.transpose() * &o.alpha;
            let v = o
                .chol
                .solve_lower_triangular(&ks)
                .ok_or_else(|| HarnessError::Numeric("Oracle-GP: singular factor".into()))?;
            let cov = gram(test, &[o.lengthscale], o.variance) - v.transpose() * v;
            let cov = (&cov + cov.transpose()) * 0.5;
            let (l, _) = cholesky_escalating(&cov, BASE_JITTER * o.variance)?;
            for draw in out.iter_mut() {
                let z = DVector::from_fn(test.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let f = &mean + &l * z;
                for i in 0..test.len() {
                    draw[(i, d)] = o.y_mean + o.y_sd * f[i];
                }
            }
        }
        Ok(out)
    }

    /// Modal non-dominated subset of `set` under the predictive draws, the
    /// same point predictor used for Choice-GP.
    pub fn predict_choice<R: Rng + ?Sized>(&self, set: &[OptionPoint], n_draws: usize, rng: &mut R) -> HarnessResult<ChoiceObservation> {
        let coords: Vec<Vec<f64>> = set.iter().map(|p| p.coords.clone()).collect();
        let ids: Vec<usize> = set.iter().map(|p| p.id).collect();
        let draws = self.draws(&coords, n_draws, rng)?;
        Ok(ChoiceObservation::new(ids.clone(), modal_pareto_subset(&draws, &ids))?)
    }
}

fn solve_chol(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let z = l.solve_lower_triangular(b).expect("factor has a positive diagonal");
    l.transpose().solve_upper_triangular(&z).expect("factor has a positive diagonal")
}
