//! Choice-based Bayesian optimisation: Pareto-set estimation from the
//! surrogate, the UCB acquisition over the probability that a candidate is
//! the sole choice against the estimated Pareto set, its optimisation, and
//! query construction.

mod session;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{pareto_indices, OptionPoint};
use crate::error::{Error, Result};
use crate::inference::SurrogatePosterior;
use crate::normal::norm_cdf;

pub use session::{
    bo_step, AnswerChannel, BoSession, HumanChannel, IterationRecord, LatentDimSpec, OracleChannel, PendingQuery,
    QueryKind, SessionConfig, SessionState,
};

/// Estimated non-dominated subset of the observed options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoEstimate {
    /// Observed option ids, parallel to `probs`.
    pub ids: Vec<usize>,
    /// Posterior probability that each id is non-dominated.
    pub probs: Vec<f64>,
    /// Ids with probability at or above `threshold`, ascending.
    pub indices: Vec<usize>,
    pub threshold: f64,
}

impl ParetoEstimate {
    pub fn prob_of(&self, id: usize) -> Option<f64> {
        self.ids.iter().position(|&i| i == id).map(|k| self.probs[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub gamma: f64,
    pub n_sobol: usize,
    pub refine_steps: usize,
    pub pareto_threshold: f64,
    pub query_size: usize,
    /// Posterior samples used per acquisition evaluation, evenly thinned.
    pub max_draws: usize,
    /// Seed of the common random numbers shared by all evaluations.
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            n_sobol: 1024,
            refine_steps: 30,
            pareto_threshold: 0.5,
            query_size: 5,
            max_draws: 256,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.5 && self.gamma < 1.0) {
            return Err(Error::param("gamma must lie in (0.5, 1)"));
        }
        if self.query_size != 5 {
            return Err(Error::param("query size is fixed at 5"));
        }
        if !(0.0..=1.0).contains(&self.pareto_threshold) {
            return Err(Error::param("pareto_threshold must lie in [0, 1]"));
        }
        if self.n_sobol == 0 || self.max_draws == 0 {
            return Err(Error::param("n_sobol and max_draws must be positive"));
        }
        Ok(())
    }
}

/// Fraction of posterior samples in which each observed option is
/// non-dominated among the observed options.
pub fn estimate_pareto_set(post: &SurrogatePosterior, observed: &[usize], threshold: f64) -> Result<ParetoEstimate> {
    if observed.is_empty() {
        return Err(Error::EmptyInput("no observed options"));
    }
    let m = post.train_points().len();
    if let Some(&bad) = observed.iter().find(|&&i| i >= m) {
        return Err(Error::Index { index: bad, len: m });
    }
    let n_e = post.n_e();
    let mut counts = vec![0usize; observed.len()];
    for s in post.samples() {
        let v = s.values();
        for k in pareto_indices(observed.len(), n_e, |i, d| v[(observed[i], d)]) {
            counts[k] += 1;
        }
    }
    let total = post.n_samples() as f64;
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let mut indices: Vec<usize> = observed
        .iter()
        .zip(&probs)
        .filter(|(_, &p)| p >= threshold)
        .map(|(&i, _)| i)
        .collect();
    if indices.is_empty() {
        let best = (0..observed.len())
            .max_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(observed[b].cmp(&observed[a])))
            .expect("observed is nonempty");
        indices.push(observed[best]);
    }
    indices.sort_unstable();
    Ok(ParetoEstimate { ids: observed.to_vec(), probs, indices, threshold })
}

/// `P(C(A*) = {x} | f*)` for one joint draw whose row 0 is the candidate and
/// whose remaining rows are the Pareto members: the probability that the
/// candidate dominates every member under the latent noise.
pub fn sole_choice_probability(f: &DMatrix<f64>, sigma: f64) -> f64 {
    let scale = 1.0 / (std::f64::consts::SQRT_2 * sigma);
    let mut log_p = 0.0;
    for j in 1..f.nrows() {
        for d in 0..f.ncols() {
            log_p += norm_cdf((f[(0, d)] - f[(j, d)]) * scale).ln();
        }
    }
    log_p.exp()
}

/// Nearest-rank empirical quantile.
pub fn nearest_rank_quantile(values: &[f64], gamma: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    // guard against γ·n landing a hair above an integer
    let rank = ((gamma * v.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

fn thinned_indices(total: usize, max: usize) -> Vec<usize> {
    if total <= max {
        (0..total).collect()
    } else {
        (0..max).map(|k| k * total / max).collect()
    }
}

/// Acquisition surface with its common random numbers fixed.
pub struct Acquisition<'a> {
    post: &'a SurrogatePosterior,
    pareto_coords: Vec<Vec<f64>>,
    samples: Vec<usize>,
    z: Vec<DMatrix<f64>>,
    gamma: f64,
    sigma: f64,
}

impl<'a> Acquisition<'a> {
    pub fn new(post: &'a SurrogatePosterior, pareto: &ParetoEstimate, config: &AcquisitionConfig) -> Result<Self> {
        config.validate()?;
        if pareto.indices.is_empty() {
            return Err(Error::EmptyInput("empty Pareto estimate"));
        }
        let pts = post.train_points();
        let pareto_coords = pareto
            .indices
            .iter()
            .map(|&i| pts.get(i).map(|p| p.coords.clone()).ok_or(Error::Index { index: i, len: pts.len() }))
            .collect::<Result<Vec<_>>>()?;
        let samples = thinned_indices(post.n_samples(), config.max_draws);
        let rows = pareto_coords.len() + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let z = samples
            .iter()
            .map(|_| DMatrix::from_fn(rows, post.n_e(), |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        Ok(Self { post, pareto_coords, samples, z, gamma: config.gamma, sigma: post.params().noise_sd })
    }

    /// Per-draw probabilities that `x` would be the sole choice.
    pub fn per_sample(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut coords = Vec::with_capacity(self.pareto_coords.len() + 1);
        coords.push(x.to_vec());
        coords.extend(self.pareto_coords.iter().cloned());
        let cond = self.post.model().conditional(&coords)?;
        Ok(self
            .samples
            .iter()
            .zip(&self.z)
            .map(|(&s, z)| {
                let u = self.post.samples()[s].whitened().expect("stored samples carry whitened values");
                sole_choice_probability(&cond.draw_with(u, z), self.sigma)
            })
            .collect())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(nearest_rank_quantile(&self.per_sample(x)?, self.gamma))
    }
}

/// UCB acquisition: the γ-quantile over posterior draws of the probability
/// that `x` is the sole choice from `{x} ∪ X̂ⁿᵈ`.
pub fn acquisition_value(
    x: &[f64],
    post: &SurrogatePosterior,
    pareto: &ParetoEstimate,
    config: &AcquisitionConfig,
) -> Result<f64> {
    Acquisition::new(post, pareto, config)?.value(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Set when the acquisition was flat zero and the point of largest
    /// predictive variance was returned instead.
    pub fallback: bool,
}

const FLAT_SURFACE: f64 = 1e-12;

/// Maximises the acquisition over a scrambled Sobol candidate set followed
/// by a bounded coordinate pattern search with step halving.
pub fn optimize_acquisition(
    post: &SurrogatePosterior,
    pareto: &ParetoEstimate,
    bounds: &[[f64; 2]],
    config: &AcquisitionConfig,
    seed: u64,
) -> Result<AcquisitionOutcome> {
    check_bounds(bounds)?;
    let n_x = bounds.len();
    if post.train_points().first().map(|p| p.dim()) != Some(n_x) {
        return Err(Error::Dimension { expected: post.train_points()[0].dim(), got: n_x });
    }
    let crn = AcquisitionConfig { seed, ..config.clone() };
    let acq = Acquisition::new(post, pareto, &crn)?;
    let candidates = sobol_points(bounds, config.n_sobol, seed);

    let mut best_x = candidates[0].clone();
    let mut best_v = f64::NEG_INFINITY;
    for c in &candidates {
        let v = acq.value(c)?;
        if v > best_v {
            best_v = v;
            best_x = c.clone();
        }
    }
    if best_v <= FLAT_SURFACE {
        let mut top = (f64::NEG_INFINITY, candidates[0].clone());
        for c in &candidates {
            let cond = post.model().conditional(std::slice::from_ref(c))?;
            let var: f64 = (0..post.n_e()).map(|d| cond.variance(0, d)).sum();
            if var > top.0 {
                top = (var, c.clone());
            }
        }
        log::warn!("acquisition surface is flat; falling back to maximum predictive variance");
        let value = acq.value(&top.1)?;
        return Ok(AcquisitionOutcome { x: top.1, value, fallback: true });
    }

    let mut step: Vec<f64> = bounds.iter().map(|b| 0.1 * (b[1] - b[0])).collect();
    for _ in 0..config.refine_steps {
        let mut improved: Option<(Vec<f64>, f64)> = None;
        for a in 0..n_x {
            for sign in [-1.0, 1.0] {
                let mut x = best_x.clone();
                x[a] = (x[a] + sign * step[a]).clamp(bounds[a][0], bounds[a][1]);
                if x[a] == best_x[a] {
                    continue;
                }
                let v = acq.value(&x)?;
                if v > improved.as_ref().map_or(best_v, |i| i.1) {
                    improved = Some((x, v));
                }
            }
        }
        match improved {
            Some((x, v)) => {
                best_x = x;
                best_v = v;
            }
            None => step.iter_mut().for_each(|s| *s *= 0.5),
        }
    }
    Ok(AcquisitionOutcome { x: best_x, value: best_v, fallback: false })
}

pub(crate) fn check_bounds(bounds: &[[f64; 2]]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::EmptyInput("no bounds"));
    }
    for b in bounds {
        if !(b[0].is_finite() && b[1].is_finite() && b[0] < b[1]) {
            return Err(Error::Domain(format!("invalid bound [{}, {}]", b[0], b[1])));
        }
    }
    Ok(())
}

/// Owen-scrambled Sobol points mapped into `bounds`.
pub fn sobol_points(bounds: &[[f64; 2]], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let s = (seed ^ (seed >> 32)) as u32;
    (0..n as u32)
        .map(|i| {
            bounds
                .iter()
                .enumerate()
                .map(|(d, b)| b[0] + (b[1] - b[0]) * sobol_burley::sample(i, d as u32, s) as f64)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    /// The new option first, then the picked observed options.
    pub ids: Vec<usize>,
    /// Posterior-mean probability that the new option dominates each
    /// picked option (NaN for padding entries).
    pub dominance_probs: Vec<f64>,
    /// Fewer than `query_size` options were available.
    pub short: bool,
}

/// Builds the query `{x_new} ∪ picked`, picking the Pareto members most
/// likely to be dominated by `x_new`, padded with likely non-dominated
/// observed options when the Pareto estimate is small.
pub fn build_query(
    x_new: &OptionPoint,
    post: &SurrogatePosterior,
    pareto: &ParetoEstimate,
    query_size: usize,
    seed: u64,
) -> Result<QueryPlan> {
    if query_size < 2 {
        return Err(Error::param("query size must be at least 2"));
    }
    if pareto.ids.contains(&x_new.id) {
        return Err(Error::param(format!("option {} is not new", x_new.id)));
    }
    let want = query_size - 1;
    let mut picked: Vec<(usize, f64)> = if pareto.indices.len() > want {
        let probs = dominance_probabilities(x_new, post, &pareto.indices, seed)?;
        let mut ranked: Vec<(usize, f64)> = pareto.indices.iter().copied().zip(probs).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(want);
        ranked
    } else {
        let probs = dominance_probabilities(x_new, post, &pareto.indices, seed)?;
        pareto.indices.iter().copied().zip(probs).collect()
    };
    if picked.len() < want {
        let mut rest: Vec<(usize, f64)> = pareto
            .ids
            .iter()
            .zip(&pareto.probs)
            .filter(|(id, _)| !pareto.indices.contains(id))
            .map(|(&id, &p)| (id, p))
            .collect();
        rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        picked.extend(rest.into_iter().take(want - picked.len()).map(|(id, _)| (id, f64::NAN)));
    }
    let short = picked.len() < want;
    let mut ids = vec![x_new.id];
    ids.extend(picked.iter().map(|p| p.0));
    Ok(QueryPlan { ids, dominance_probs: picked.iter().map(|p| p.1).collect(), short })
}

/// `E[∏_d Φ((f*_d(x_new) − f*_d(x_j))/(√2σ))]` for each `x_j` in `members`.
pub fn dominance_probabilities(
    x_new: &OptionPoint,
    post: &SurrogatePosterior,
    members: &[usize],
    seed: u64,
) -> Result<Vec<f64>> {
    if members.is_empty() {
        return Ok(Vec::new());
    }
    let pts = post.train_points();
    let mut coords = vec![x_new.coords.clone()];
    for &i in members {
        coords.push(pts.get(i).ok_or(Error::Index { index: i, len: pts.len() })?.coords.clone());
    }
    let cond = post.model().conditional(&coords)?;
    let scale = 1.0 / (std::f64::consts::SQRT_2 * post.params().noise_sd);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0; members.len()];
    for s in post.samples() {
        let f = cond.draw(s.whitened().expect("stored samples carry whitened values"), &mut rng);
        for (j, a) in acc.iter_mut().enumerate() {
            *a += (0..f.ncols()).map(|d| norm_cdf((f[(0, d)] - f[(j + 1, d)]) * scale)).product::<f64>();
        }
    }
    let n = post.n_samples() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}
