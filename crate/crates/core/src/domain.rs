//! Options, choice observations, Pareto dominance and the simulated
//! choice oracle.
//!
//! Everything here uses the maximisation convention: larger objective or
//! latent values are better.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::LatentMatrix;

/// A design point together with its index in the run's option table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionPoint {
    pub id: usize,
    pub coords: Vec<f64>,
}

impl OptionPoint {
    pub fn new(id: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::param(format!("option {id} has non-finite coordinates")));
        }
        Ok(Self { id, coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Builds an option table with ids `0..rows.len()`.
pub fn option_table(rows: Vec<Vec<f64>>) -> Result<Vec<OptionPoint>> {
    let n_x = rows.first().map(Vec::len).unwrap_or(0);
    rows.into_iter()
        .enumerate()
        .map(|(id, coords)| {
            if coords.len() != n_x {
                return Err(Error::Dimension { expected: n_x, got: coords.len() });
            }
            OptionPoint::new(id, coords)
        })
        .collect()
}

/// An offered set `A_k` and the chosen subset `C(A_k)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChoiceObservation {
    #[serde(rename = "set")]
    set_indices: Vec<usize>,
    #[serde(rename = "chosen")]
    chosen_indices: Vec<usize>,
}

impl ChoiceObservation {
    pub fn new(set_indices: Vec<usize>, chosen_indices: Vec<usize>) -> Result<Self> {
        if chosen_indices.is_empty() {
            return Err(Error::InvalidChoice("chosen set is empty".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(set_indices.len());
        for &id in &set_indices {
            if !seen.insert(id) {
                return Err(Error::InvalidChoice(format!("duplicate option id {id} in set")));
            }
        }
        let mut chosen_seen = std::collections::HashSet::with_capacity(chosen_indices.len());
        for &id in &chosen_indices {
            if !seen.contains(&id) {
                return Err(Error::InvalidChoice(format!("chosen id {id} is not in the offered set")));
            }
            if !chosen_seen.insert(id) {
                return Err(Error::InvalidChoice(format!("duplicate chosen id {id}")));
            }
        }
        Ok(Self { set_indices, chosen_indices })
    }

    pub fn set(&self) -> &[usize] {
        &self.set_indices
    }

    pub fn chosen(&self) -> &[usize] {
        &self.chosen_indices
    }

    /// `R(A_k)`, in offered order.
    pub fn rejected(&self) -> Vec<usize> {
        self.set_indices
            .iter()
            .copied()
            .filter(|id| !self.chosen_indices.contains(id))
            .collect()
    }

    /// Same observation with the chosen ids sorted, for set comparisons.
    pub fn canonical_chosen(&self) -> Vec<usize> {
        let mut c = self.chosen_indices.clone();
        c.sort_unstable();
        c
    }

    pub fn max_id(&self) -> usize {
        self.set_indices.iter().copied().max().unwrap_or(0)
    }

    /// Rebuilds after deserialisation, where the constructor was bypassed.
    pub fn validate(&self) -> Result<()> {
        Self::new(self.set_indices.clone(), self.chosen_indices.clone()).map(|_| ())
    }
}

/// `m × n_o` objective evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveMatrix {
    values: DMatrix<f64>,
}

impl ObjectiveMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::param("objective matrix needs at least one column"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("objective matrix has non-finite entries"));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_o = rows.first().map(Vec::len).unwrap_or(1);
        for r in rows {
            if r.len() != n_o {
                return Err(Error::Dimension { expected: n_o, got: r.len() });
            }
        }
        Self::new(DMatrix::from_fn(rows.len(), n_o, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// Pareto dominance: `a` is no worse everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), got: b.len() });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::param("dominance check on non-finite values"));
    }
    Ok(dominates_unchecked(a, b))
}

#[inline]
pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of the non-dominated rows.
pub fn non_dominated_set(values: &ObjectiveMatrix) -> Result<Vec<usize>> {
    if values.rows() == 0 {
        return Err(Error::EmptyInput("objective matrix has no rows"));
    }
    let m = values.values();
    Ok(pareto_indices(m.nrows(), m.ncols(), |i, j| m[(i, j)]))
}

/// Sort-and-cull front extraction over an accessor `value(row, col)`.
///
/// Rows are visited in descending lexicographic order, so any dominator of
/// a row is visited before it; by transitivity it suffices to compare each
/// row against the rows already kept. Returned indices are ascending.
pub(crate) fn pareto_indices(n: usize, dims: usize, value: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        for j in 0..dims {
            match value(b, j).total_cmp(&value(a, j)) {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        std::cmp::Ordering::Equal
    });
    let mut kept: Vec<usize> = Vec::new();
    let mut row_a = vec![0.0; dims];
    let mut row_b = vec![0.0; dims];
    for &i in &order {
        for (j, r) in row_b.iter_mut().enumerate() {
            *r = value(i, j);
        }
        let dominated = kept.iter().any(|&k| {
            for (j, r) in row_a.iter_mut().enumerate() {
                *r = value(k, j);
            }
            dominates_unchecked(&row_a, &row_b)
        });
        if !dominated {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Noisy Pareto oracle: evaluates `g`, perturbs every objective entry by
/// `N(0, noise_sd²)` and reports the non-dominated options as chosen.
///
/// Noise is drawn row by row, objective by objective.
pub fn simulate_choice<R, G>(options: &[OptionPoint], g: G, noise_sd: f64, rng: &mut R) -> Result<ChoiceObservation>
where
    R: Rng + ?Sized,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if options.is_empty() {
        return Err(Error::EmptyInput("choice set has no options"));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::param(format!("noise sd must be finite and >= 0, got {noise_sd}")));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(options.len());
    for opt in options {
        let mut v = g(&opt.coords);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Oracle(opt.id));
        }
        if noise_sd > 0.0 {
            for x in v.iter_mut() {
                let e: f64 = StandardNormal.sample(rng);
                *x += noise_sd * e;
            }
        }
        rows.push(v);
    }
    let matrix = ObjectiveMatrix::from_rows(&rows)?;
    let front = non_dominated_set(&matrix)?;
    let set: Vec<usize> = options.iter().map(|o| o.id).collect();
    let chosen = front.into_iter().map(|i| set[i]).collect();
    ChoiceObservation::new(set, chosen)
}

/// Noise-free consistency of an observation with latent rows.
///
/// Every rejected option must be dominated by some chosen option and no
/// chosen option may dominate another. Dominance follows the strict
/// definition, so equal rows are mutually non-dominating.
pub fn check_consistency(obs: &ChoiceObservation, latents: &LatentMatrix) -> Result<bool> {
    let m = latents.rows();
    for &id in obs.set() {
        if id >= m {
            return Err(Error::Index { index: id, len: m });
        }
    }
    let rows: Vec<Vec<f64>> = obs.set().iter().map(|&id| latents.row(id)).collect();
    let pos = |id: usize| obs.set().iter().position(|&s| s == id).expect("validated id");
    let chosen: Vec<usize> = obs.chosen().iter().map(|&id| pos(id)).collect();
    let rejected: Vec<usize> = obs.rejected().into_iter().map(pos).collect();

    let rejected_ok = rejected
        .iter()
        .all(|&j| chosen.iter().any(|&i| dominates_unchecked(&rows[i], &rows[j])));
    let chosen_ok = chosen.iter().all(|&i| {
        chosen
            .iter()
            .all(|&p| p == i || !dominates_unchecked(&rows[p], &rows[i]))
    });
    Ok(rejected_ok && chosen_ok)
}

/// Min-max scaling of input coordinates onto the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitScaler {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl UnitScaler {
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::param("bounds must have at least one dimension"));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::param(format!("invalid bound {i}: [{lo}, {hi}]")));
            }
        }
        Ok(Self {
            lower: bounds.iter().map(|b| b.0).collect(),
            upper: bounds.iter().map(|b| b.1).collect(),
        })
    }

    /// Bounds taken from the data; constant columns get a unit-width box.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput("no rows to scale"))?;
        let mut lower = first.clone();
        let mut upper = first.clone();
        for r in rows {
            if r.len() != lower.len() {
                return Err(Error::Dimension { expected: lower.len(), got: r.len() });
            }
            for (j, &v) in r.iter().enumerate() {
                lower[j] = lower[j].min(v);
                upper[j] = upper[j].max(v);
            }
        }
        for j in 0..lower.len() {
            if upper[j] <= lower[j] {
                upper[j] = lower[j] + 1.0;
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| (v - self.lower[j]) / (self.upper[j] - self.lower[j]))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(j, v)| self.lower[j] + v * (self.upper[j] - self.lower[j]))
            .collect()
    }
}
