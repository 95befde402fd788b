//! Independent zero-mean GP priors, one per latent dimension.
//!
//! Each latent dimension `d` has its own Matérn-3/2 kernel with ARD (or
//! isotropic) lengthscales and a signal variance. Latent values are held
//! both raw and whitened: `f_d = L_d u_d` with `L_d` the Cholesky factor of
//! the jittered Gram matrix of dimension `d`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::OptionPoint;
use crate::error::{Error, Result};

/// Relative jitter added to every Gram diagonal, in units of `σ_f²`.
pub const BASE_JITTER: f64 = 1e-8;
/// Number of ×10 escalations tried after the base jitter fails.
pub const JITTER_ESCALATIONS: usize = 5;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    Matern32,
}

/// Kernel hyperparameters for all latent dimensions plus the shared
/// likelihood noise `σ`.
///
/// `lengthscales[d]` has either one entry per input coordinate (ARD) or a
/// single entry (isotropic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    #[serde(default)]
    pub kind: KernelKind,
    pub lengthscales: Vec<Vec<f64>>,
    pub signal_variances: Vec<f64>,
    pub noise_sd: f64,
}

impl KernelParams {
    pub fn new(lengthscales: Vec<Vec<f64>>, signal_variances: Vec<f64>, noise_sd: f64) -> Result<Self> {
        let p = Self { kind: KernelKind::Matern32, lengthscales, signal_variances, noise_sd };
        p.validate()?;
        Ok(p)
    }

    pub fn isotropic(n_e: usize, lengthscale: f64, signal_variance: f64, noise_sd: f64) -> Result<Self> {
        Self::new(vec![vec![lengthscale]; n_e], vec![signal_variance; n_e], noise_sd)
    }

    pub fn n_e(&self) -> usize {
        self.signal_variances.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.signal_variances.is_empty() {
            return Err(Error::param("at least one latent dimension is required"));
        }
        if self.lengthscales.len() != self.signal_variances.len() {
            return Err(Error::Dimension { expected: self.signal_variances.len(), got: self.lengthscales.len() });
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.noise_sd) {
            return Err(Error::param(format!("noise sd must be positive, got {}", self.noise_sd)));
        }
        for (d, (ls, &var)) in self.lengthscales.iter().zip(&self.signal_variances).enumerate() {
            if !positive(var) {
                return Err(Error::param(format!("signal variance of dim {d} must be positive, got {var}")));
            }
            if ls.is_empty() || ls.iter().any(|&l| !positive(l)) {
                return Err(Error::param(format!("lengthscales of dim {d} must be positive: {ls:?}")));
            }
        }
        Ok(())
    }

    /// Checks that the lengthscale vectors fit inputs of dimension `n_x`.
    pub fn check_input_dim(&self, n_x: usize) -> Result<()> {
        for ls in &self.lengthscales {
            if ls.len() != 1 && ls.len() != n_x {
                return Err(Error::Dimension { expected: n_x, got: ls.len() });
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn scaled_sq_dist(x: &[f64], y: &[f64], ls: &[f64]) -> f64 {
    if ls.len() == 1 {
        let inv = 1.0 / (ls[0] * ls[0]);
        x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * inv
    } else {
        x.iter()
            .zip(y)
            .zip(ls)
            .map(|((a, b), l)| {
                let t = (a - b) / l;
                t * t
            })
            .sum()
    }
}

#[inline]
pub(crate) fn matern32(x: &[f64], y: &[f64], ls: &[f64], variance: f64) -> f64 {
    let r = scaled_sq_dist(x, y, ls).sqrt();
    variance * (1.0 + SQRT3 * r) * (-SQRT3 * r).exp()
}

/// Matérn-3/2 covariance of latent dimension `d` between two options.
pub fn kernel_matern32(x: &OptionPoint, y: &OptionPoint, params: &KernelParams, d: usize) -> Result<f64> {
    params.validate()?;
    if x.dim() != y.dim() {
        return Err(Error::Dimension { expected: x.dim(), got: y.dim() });
    }
    params.check_input_dim(x.dim())?;
    if d >= params.n_e() {
        return Err(Error::Index { index: d, len: params.n_e() });
    }
    Ok(matern32(&x.coords, &y.coords, &params.lengthscales[d], params.signal_variances[d]))
}

/// Matérn-3/2 Gram matrix of `points` for one latent dimension.
pub fn gram(points: &[Vec<f64>], ls: &[f64], variance: f64) -> DMatrix<f64> {
    let m = points.len();
    let mut k = DMatrix::zeros(m, m);
    for j in 0..m {
        k[(j, j)] = variance;
        for i in j + 1..m {
            let v = matern32(&points[i], &points[j], ls, variance);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Matérn-3/2 cross-covariance, train rows by test columns.
pub fn cross_gram(train: &[Vec<f64>], test: &[Vec<f64>], ls: &[f64], variance: f64) -> DMatrix<f64> {
    DMatrix::from_fn(train.len(), test.len(), |i, j| matern32(&train[i], &test[j], ls, variance))
}

/// Cholesky of `k + jitter·I`, escalating the jitter ×10 on failure.
///
/// A zero base jitter escalates from `1e-12` times the largest diagonal.
pub fn cholesky_escalating(k: &DMatrix<f64>, base_jitter: f64) -> Result<(DMatrix<f64>, f64)> {
    let scale = k.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let mut jitter = base_jitter;
    for attempt in 0..=JITTER_ESCALATIONS + 1 {
        let mut a = k.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
        if let Some(ch) = a.cholesky() {
            return Ok((ch.unpack(), jitter));
        }
        if attempt == JITTER_ESCALATIONS + usize::from(base_jitter == 0.0) {
            break;
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 10.0 };
    }
    Err(Error::Factorization { jitter })
}

/// Lower Cholesky factor of one latent dimension's Gram matrix.
#[derive(Debug, Clone)]
pub struct GramFactor {
    pub l: DMatrix<f64>,
    pub jitter: f64,
}

/// Per-dimension factors of `K_d + jitter·I`.
pub fn gram_cholesky(points: &[OptionPoint], params: &KernelParams, jitter: f64) -> Result<Vec<GramFactor>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("no training points"));
    }
    params.validate()?;
    let n_x = points[0].dim();
    params.check_input_dim(n_x)?;
    let coords: Vec<Vec<f64>> = points.iter().map(|p| p.coords.clone()).collect();
    (0..params.n_e())
        .map(|d| {
            let k = gram(&coords, &params.lengthscales[d], params.signal_variances[d]);
            let (l, jitter) = cholesky_escalating(&k, jitter)?;
            Ok(GramFactor { l, jitter })
        })
        .collect()
}

/// Latent values `f_d(x_i)` (`m × n_e`) with their optional whitened form.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    values: DMatrix<f64>,
    whitened: Option<DMatrix<f64>>,
}

impl LatentMatrix {
    /// Raw latent rows without a prior factorisation.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_e = rows.first().map(Vec::len).ok_or(Error::EmptyInput("no latent rows"))?;
        for r in rows {
            if r.len() != n_e {
                return Err(Error::Dimension { expected: n_e, got: r.len() });
            }
        }
        Self::from_values(DMatrix::from_fn(rows.len(), n_e, |i, d| rows[i][d]))
    }

    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("latent values must be finite"));
        }
        Ok(Self { values, whitened: None })
    }

    /// `values_col_d = L_d · u_col_d`.
    pub fn from_whitened(u: DMatrix<f64>, factors: &[GramFactor]) -> Result<Self> {
        if u.ncols() != factors.len() {
            return Err(Error::Dimension { expected: factors.len(), got: u.ncols() });
        }
        let m = u.nrows();
        let mut values = DMatrix::zeros(m, u.ncols());
        for (d, fac) in factors.iter().enumerate() {
            if fac.l.nrows() != m {
                return Err(Error::Dimension { expected: fac.l.nrows(), got: m });
            }
            let col = lower_mul(&fac.l, u.column(d).as_slice());
            values.column_mut(d).copy_from_slice(&col);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("latent values must be finite"));
        }
        Ok(Self { values, whitened: Some(u) })
    }

    /// Attaches the whitened form by triangular solves against `factors`.
    pub fn whiten(values: DMatrix<f64>, factors: &[GramFactor]) -> Result<Self> {
        if values.ncols() != factors.len() {
            return Err(Error::Dimension { expected: factors.len(), got: values.ncols() });
        }
        let mut u = DMatrix::zeros(values.nrows(), values.ncols());
        for (d, fac) in factors.iter().enumerate() {
            let col = DVector::from_column_slice(values.column(d).as_slice());
            let sol = fac
                .l
                .solve_lower_triangular(&col)
                .ok_or(Error::Factorization { jitter: fac.jitter })?;
            u.column_mut(d).copy_from(&sol);
        }
        Ok(Self { values, whitened: Some(u) })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_e(&self) -> usize {
        self.values.ncols()
    }

    #[inline]
    pub fn value(&self, i: usize, d: usize) -> f64 {
        self.values[(i, d)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn whitened(&self) -> Option<&DMatrix<f64>> {
        self.whitened.as_ref()
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

/// `L x` for lower-triangular `L`, skipping the zero upper half.
pub(crate) fn lower_mul(l: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let m = l.nrows();
    let mut out = vec![0.0; m];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = l.column(j);
        for i in j..m {
            out[i] += col[i] * xj;
        }
    }
    out
}

/// Factorised GP prior over a fixed training option table.
#[derive(Debug, Clone)]
pub struct GpModel {
    points: Vec<Vec<f64>>,
    params: KernelParams,
    factors: Vec<GramFactor>,
}

impl GpModel {
    /// Factorises with the base relative jitter (`1e-8·σ_f²` per dimension).
    pub fn new(points: &[OptionPoint], params: KernelParams) -> Result<Self> {
        Self::with_relative_jitter(points, params, BASE_JITTER)
    }

    pub fn with_relative_jitter(points: &[OptionPoint], params: KernelParams, rel_jitter: f64) -> Result<Self> {
        let coords: Vec<Vec<f64>> = points.iter().map(|p| p.coords.clone()).collect();
        Self::from_coords(coords, params, rel_jitter)
    }

    pub(crate) fn from_coords(points: Vec<Vec<f64>>, params: KernelParams, rel_jitter: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("no training points"));
        }
        params.validate()?;
        let n_x = points[0].len();
        if points.iter().any(|p| p.len() != n_x) {
            return Err(Error::param("training points have inconsistent dimensions"));
        }
        params.check_input_dim(n_x)?;
        let factors = (0..params.n_e())
            .map(|d| {
                let var = params.signal_variances[d];
                let k = gram(&points, &params.lengthscales[d], var);
                let (l, jitter) = cholesky_escalating(&k, rel_jitter * var)?;
                Ok(GramFactor { l, jitter })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { points, params, factors })
    }

    pub fn n_train(&self) -> usize {
        self.points.len()
    }

    pub fn n_e(&self) -> usize {
        self.params.n_e()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn factors(&self) -> &[GramFactor] {
        &self.factors
    }

    pub fn latents_from_whitened(&self, u: DMatrix<f64>) -> Result<LatentMatrix> {
        LatentMatrix::from_whitened(u, &self.factors)
    }

    /// One draw from the GP prior at the training points.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LatentMatrix> {
        let u = DMatrix::from_fn(self.n_train(), self.n_e(), |_, _| StandardNormal.sample(rng));
        self.latents_from_whitened(u)
    }

    /// Conditional `p(f* | f)` at `test`, factorised once so that many
    /// latent realisations can share it.
    pub fn conditional(&self, test: &[Vec<f64>]) -> Result<Conditional> {
        if test.is_empty() {
            return Err(Error::EmptyInput("no test points"));
        }
        let n_x = self.points[0].len();
        if let Some(bad) = test.iter().find(|t| t.len() != n_x) {
            return Err(Error::Dimension { expected: n_x, got: bad.len() });
        }
        let t = test.len();
        let mut cross = Vec::with_capacity(self.n_e());
        let mut chol = Vec::with_capacity(self.n_e());
        let mut variances = Vec::with_capacity(self.n_e());
        for d in 0..self.n_e() {
            let ls = &self.params.lengthscales[d];
            let var = self.params.signal_variances[d];
            let k_star = cross_gram(&self.points, test, ls, var);
            let v = self.factors[d]
                .l
                .solve_lower_triangular(&k_star)
                .ok_or(Error::Factorization { jitter: self.factors[d].jitter })?;
            let mut cov = gram(test, ls, var);
            cov -= v.tr_mul(&v);
            // symmetrise against round-off before factorising
            for i in 0..t {
                for j in 0..i {
                    let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                    cov[(i, j)] = s;
                    cov[(j, i)] = s;
                }
            }
            variances.push((0..t).map(|i| cov[(i, i)].max(0.0)).collect());
            let (c, _) = cholesky_escalating(&cov, BASE_JITTER * var)?;
            cross.push(v);
            chol.push(c);
        }
        Ok(Conditional { cross, chol, variances })
    }
}

/// Factorised conditional distribution of test latents given training
/// latents. The mean for a realisation with whitened values `u_d` is
/// `V_dᵀ u_d` where `V_d = L_d⁻¹ K_*`.
#[derive(Debug, Clone)]
pub struct Conditional {
    cross: Vec<DMatrix<f64>>,
    chol: Vec<DMatrix<f64>>,
    variances: Vec<Vec<f64>>,
}

impl Conditional {
    pub fn n_test(&self) -> usize {
        self.chol.first().map(|c| c.nrows()).unwrap_or(0)
    }

    pub fn n_e(&self) -> usize {
        self.chol.len()
    }

    /// Conditional variance of test point `i` in dimension `d`.
    pub fn variance(&self, i: usize, d: usize) -> f64 {
        self.variances[d][i]
    }

    /// `n_test × n_e` conditional mean.
    pub fn mean(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let t = self.n_test();
        let mut out = DMatrix::zeros(t, self.n_e());
        for d in 0..self.n_e() {
            let col = self.cross[d].tr_mul(&u.column(d));
            out.column_mut(d).copy_from(&col);
        }
        out
    }

    /// Mean plus `chol · z` per dimension, with `z` an `n_test × n_e`
    /// matrix of standard normals.
    pub fn draw_with(&self, u: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.mean(u);
        for d in 0..self.n_e() {
            let noise = lower_mul(&self.chol[d], z.column(d).as_slice());
            for (i, e) in noise.into_iter().enumerate() {
                out[(i, d)] += e;
            }
        }
        out
    }

    pub fn draw<R: Rng + ?Sized>(&self, u: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
        let z = DMatrix::from_fn(self.n_test(), self.n_e(), |_, _| StandardNormal.sample(rng));
        self.draw_with(u, &z)
    }

    /// Full conditional covariance of dimension `d`.
    pub fn covariance(&self, d: usize) -> DMatrix<f64> {
        &self.chol[d] * self.chol[d].transpose()
    }
}

/// Whitened form of `latent` under `model`, computing it if absent.
pub(crate) fn whitened_of(model: &GpModel, latent: &LatentMatrix) -> Result<DMatrix<f64>> {
    match latent.whitened() {
        Some(u) if u.nrows() == model.n_train() => Ok(u.clone()),
        _ => Ok(LatentMatrix::whiten(latent.values().clone(), model.factors())?
            .whitened()
            .expect("whiten sets the whitened form")
            .clone()),
    }
}

/// One joint draw of the test latents given a single training realisation.
pub fn predictive_conditional(
    model: &GpModel,
    latent: &LatentMatrix,
    test: &[OptionPoint],
    seed: u64,
) -> Result<DMatrix<f64>> {
    if latent.rows() != model.n_train() || latent.n_e() != model.n_e() {
        return Err(Error::Dimension { expected: model.n_train(), got: latent.rows() });
    }
    let coords: Vec<Vec<f64>> = test.iter().map(|p| p.coords.clone()).collect();
    let cond = model.conditional(&coords)?;
    let u = whitened_of(model, latent)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(cond.draw(&u, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::option_table;
    use rand::SeedableRng;

    fn params1(ls: f64, var: f64) -> KernelParams {
        KernelParams::isotropic(1, ls, var, 0.1).unwrap()
    }

    #[test]
    fn kernel_values() {
        let x = OptionPoint::new(0, vec![0.0]).unwrap();
        let y = OptionPoint::new(1, vec![1.0]).unwrap();
        let p = params1(1.0, 1.0);
        let expected = (1.0 + 3f64.sqrt()) * (-(3f64.sqrt())).exp();
        assert!((kernel_matern32(&x, &y, &p, 0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.48335).abs() < 1e-5);
        assert_eq!(kernel_matern32(&x, &x, &params1(0.3, 2.5), 0).unwrap(), 2.5);
        let far = OptionPoint::new(2, vec![1e4]).unwrap();
        assert!(kernel_matern32(&x, &far, &p, 0).unwrap() < 1e-300);
        assert_eq!(
            kernel_matern32(&x, &y, &p, 0).unwrap(),
            kernel_matern32(&y, &x, &p, 0).unwrap()
        );
    }

    #[test]
    fn kernel_rejects_bad_params() {
        let x = OptionPoint::new(0, vec![0.0]).unwrap();
        let mut p = params1(1.0, 1.0);
        p.signal_variances[0] = 0.0;
        assert!(matches!(kernel_matern32(&x, &x, &p, 0), Err(Error::Parameter(_))));
        assert!(KernelParams::isotropic(1, -1.0, 1.0, 0.1).is_err());
        assert!(KernelParams::isotropic(1, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_point_factor() {
        let pts = option_table(vec![vec![0.3]]).unwrap();
        let f = gram_cholesky(&pts, &params1(0.5, 2.0), 1e-6).unwrap();
        assert!((f[0].l[(0, 0)] - (2.0f64 + 1e-6).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn duplicated_point_is_rescued() {
        let pts = option_table(vec![vec![0.3], vec![0.3], vec![0.9]]).unwrap();
        let f = gram_cholesky(&pts, &params1(0.5, 1.0), 1e-6).unwrap();
        assert_eq!(f.len(), 1);
        // exactly singular without jitter
        let pts = option_table(vec![vec![0.3], vec![0.3]]).unwrap();
        assert!(gram_cholesky(&pts, &params1(0.5, 1.0), 0.0).is_ok());
    }

    #[test]
    fn reconstruction_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let pts = option_table(rows.clone()).unwrap();
        let p = KernelParams::new(vec![vec![0.3, 0.7]], vec![1.3], 0.1).unwrap();
        let f = gram_cholesky(&pts, &p, 1e-8).unwrap();
        let mut k = gram(&rows, &p.lengthscales[0], 1.3);
        for i in 0..10 {
            k[(i, i)] += f[0].jitter;
        }
        let err = (&f[0].l * f[0].l.transpose() - k).amax();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn whitening_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..25).map(|_| vec![rng.random::<f64>()]).collect();
        let pts = option_table(rows).unwrap();
        let model = GpModel::new(&pts, KernelParams::isotropic(2, 0.2, 1.5, 0.1).unwrap()).unwrap();
        let lat = model.sample_prior(&mut rng).unwrap();
        let back = LatentMatrix::whiten(lat.values().clone(), model.factors()).unwrap();
        let again = LatentMatrix::from_whitened(back.whitened().unwrap().clone(), model.factors()).unwrap();
        let rel = (again.values() - lat.values()).amax() / lat.values().amax();
        assert!(rel < 1e-10, "{rel}");
    }

    #[test]
    fn conditional_interpolates_and_reverts() {
        let pts = option_table(vec![vec![0.1], vec![0.4], vec![0.8]]).unwrap();
        let model = GpModel::new(&pts, params1(0.3, 1.0)).unwrap();
        let lat = LatentMatrix::whiten(DMatrix::from_column_slice(3, 1, &[0.5, -1.0, 2.0]), model.factors()).unwrap();
        let u = lat.whitened().unwrap().clone();
        let cond = model.conditional(&[vec![0.4], vec![50.0]]).unwrap();
        let mean = cond.mean(&u);
        assert!((mean[(0, 0)] + 1.0).abs() < 1e-6);
        assert!(cond.variance(0, 0) < 1e-6);
        assert!(mean[(1, 0)].abs() < 1e-12);
        assert!((cond.variance(1, 0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn conditional_moments_by_monte_carlo() {
        let pts = option_table(vec![vec![0.0], vec![0.5], vec![1.0]]).unwrap();
        let model = GpModel::new(&pts, params1(0.4, 1.0)).unwrap();
        let lat = LatentMatrix::whiten(DMatrix::from_column_slice(3, 1, &[0.2, 1.0, -0.5]), model.factors()).unwrap();
        let u = lat.whitened().unwrap().clone();
        let cond = model.conditional(&[vec![0.25]]).unwrap();
        let analytic = cond.mean(&u)[(0, 0)];
        let sd = cond.variance(0, 0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| cond.draw(&u, &mut rng)[(0, 0)]).sum::<f64>() / n as f64;
        assert!((mean - analytic).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn predictive_covariance_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = option_table((0..12).map(|_| vec![rng.random::<f64>()]).collect()).unwrap();
        let model = GpModel::new(&pts, params1(0.2, 1.0)).unwrap();
        let test: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.random::<f64>()]).collect();
        let cond = model.conditional(&test).unwrap();
        assert!(cond.covariance(0).cholesky().is_some() || {
            let mut c = cond.covariance(0);
            for i in 0..6 {
                c[(i, i)] += 1e-10;
            }
            c.cholesky().is_some()
        });
    }

    #[test]
    fn predictive_draw_is_seeded() {
        let pts = option_table(vec![vec![0.0], vec![1.0]]).unwrap();
        let model = GpModel::new(&pts, params1(0.5, 1.0)).unwrap();
        let lat = LatentMatrix::from_rows(&[vec![0.3], vec![-0.2]]).unwrap();
        let test = option_table(vec![vec![0.5], vec![0.7]]).unwrap();
        let a = predictive_conditional(&model, &lat, &test, 3).unwrap();
        let b = predictive_conditional(&model, &lat, &test, 3).unwrap();
        assert_eq!(a, b);
    }
}
