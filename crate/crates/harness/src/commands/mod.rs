//! The experiment subcommands. Each writes its results, the resolved
//! configuration and a manifest into a fresh output directory.

mod bo;
mod fit_eval;
mod generate;
mod select;

pub use bo::{bo_run, BoRow, BoSummary};
pub use fit_eval::{fit_eval, AccuracyReport, CHOICE_PREFIX, ORACLE_COLUMN};
pub use generate::generate_data;
pub use select::{select_dim, SelectRow, SelectSummary};

use std::collections::BTreeSet;
use std::path::Path;

use choicebo_core::domain::{ChoiceObservation, OptionPoint};

use crate::config::RunConfig;
use crate::error::{HarnessError, HarnessResult};
use crate::output::{RunDir, RESOLVED_CONFIG};

fn open_run(config: &RunConfig, out: &Path, force: bool, command: &str) -> HarnessResult<RunDir> {
    let mut dir = RunDir::create(out, force, command, config.seed)?;
    dir.write_json(RESOLVED_CONFIG, config)?;
    Ok(dir)
}

/// Runs `f` over `0..reps` on a pool of `threads` workers (0 = all
/// cores), returning results in repetition order.
fn per_rep<T: Send>(threads: usize, reps: usize, f: impl Fn(usize) -> HarnessResult<T> + Sync + Send) -> HarnessResult<Vec<T>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..reps).into_par_iter().map(f).collect())
}

/// Restricts `options` to those named by `choices`, renumbered `0..m` in
/// id order, and rewrites the choices to match.
fn compact(choices: &[ChoiceObservation], options: &[Vec<f64>]) -> HarnessResult<(Vec<ChoiceObservation>, Vec<OptionPoint>)> {
    let used: BTreeSet<usize> = choices.iter().flat_map(|c| c.set().iter().copied()).collect();
    let mut new_id = vec![usize::MAX; options.len()];
    let mut points = Vec::with_capacity(used.len());
    for (k, &id) in used.iter().enumerate() {
        let row = options.get(id).ok_or_else(|| HarnessError::Config(format!("choice refers to missing option {id}")))?;
        new_id[id] = k;
        points.push(OptionPoint::new(k, row.clone())?);
    }
    let remapped = choices
        .iter()
        .map(|c| {
            ChoiceObservation::new(
                c.set().iter().map(|&i| new_id[i]).collect(),
                c.chosen().iter().map(|&i| new_id[i]).collect(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((remapped, points))
}

/// Option points of a choice set, keeping their original ids.
fn set_points(obs: &ChoiceObservation, options: &[Vec<f64>]) -> HarnessResult<Vec<OptionPoint>> {
    obs.set()
        .iter()
        .map(|&i| {
            let row = options.get(i).ok_or_else(|| HarnessError::Config(format!("choice refers to missing option {i}")))?;
            Ok(OptionPoint::new(i, row.clone())?)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
