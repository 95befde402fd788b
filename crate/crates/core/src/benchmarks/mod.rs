//! Test problems, hypervolume, and dataset generation for experiments.

mod datasets;
mod hypervolume;
mod problems;

pub use datasets::{
    fold_assignment, generate_choice_dataset, ingest_multioutput_csv, read_multioutput_csv, sample_choice_sets,
    sample_choice_sets_from, toy_objective_1d, toy_objectives, ChoiceDataset, IngestedFold, SplitSpec, TOY_BOUNDS,
};
pub use hypervolume::hypervolume;
pub use problems::{evaluate_benchmark, BenchmarkProblem, ProblemKind, PROBLEM_NAMES};

use crate::domain::ChoiceObservation;
use crate::error::{Error, Result};

pub const LOG_HV_FLOOR: f64 = 1e-12;

/// Hypervolume of the observed objective vectors' front.
pub fn observed_hypervolume(observed: &[Vec<f64>], problem: &BenchmarkProblem) -> Result<f64> {
    let values = observed.iter().map(|x| problem.eval(x)).collect::<Result<Vec<_>>>()?;
    hypervolume(&values, &problem.ref_point)
}

/// `log10` of the gap between the true front's hypervolume and that of the
/// front of `observed` inputs, floored at 1e-12.
pub fn log_hv_difference(observed: &[Vec<f64>], problem: &BenchmarkProblem) -> Result<f64> {
    if observed.is_empty() {
        return Err(Error::EmptyInput("no observed options"));
    }
    let hv = observed_hypervolume(observed, problem)?;
    Ok((problem.true_front_hv - hv).max(LOG_HV_FLOOR).log10())
}

/// Fraction of choices whose predicted chosen set equals the true one.
pub fn accuracy(predicted: &[ChoiceObservation], truth: &[ChoiceObservation]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension { expected: truth.len(), got: predicted.len() });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput("no choices to score"));
    }
    let hits = predicted
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.canonical_chosen() == t.canonical_chosen())
        .count();
    Ok(hits as f64 / truth.len() as f64)
}
