use std::path::Path;

use choicebo_core::benchmarks::{log_hv_difference, BenchmarkProblem};
use choicebo_core::domain::{OptionPoint, UnitScaler};
use choicebo_core::mobo::{bo_step, sobol_points, BoSession, OracleChannel, SessionState};
use serde::{Deserialize, Serialize};

use crate::config::{rep_seed, BoConfig, RunConfig};
use crate::error::{HarnessError, HarnessResult};

use super::{median, open_run, per_rep};

pub const CHOICE_GP: &str = "choice-gp";
pub const SOBOL: &str = "sobol";

/// One iteration of one repetition. Iteration 0 is the initial design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoRow {
    pub method: String,
    pub rep: usize,
    pub iteration: usize,
    pub n_observed: usize,
    pub log_hv_diff: f64,
    pub n_pareto: Option<usize>,
    pub acquisition_max: Option<f64>,
    pub fallback: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoSummary {
    pub benchmark: String,
    pub rows: Vec<BoRow>,
    /// Per method, the median over repetitions at each iteration.
    pub median_curves: Vec<(String, Vec<f64>)>,
}

impl BoSummary {
    pub fn curve(&self, method: &str) -> Option<&[f64]> {
        self.median_curves.iter().find(|(m, _)| m == method).map(|(_, c)| c.as_slice())
    }
}

/// Choice-GP BO against a simulated agent, and the Sobol baseline starting
/// from the same initial options, on a named benchmark.
pub fn bo_run(config: &RunConfig, out: &Path, force: bool) -> HarnessResult<BoSummary> {
    let c = &config.bo_run;
    let problem = BenchmarkProblem::by_name(&c.benchmark).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut dir = open_run(config, out, force, "bo-run")?;
    let per = per_rep(config.threads, c.reps, |r| run_rep(c, &problem, config.seed, r))?;

    let mut rows = Vec::new();
    let mut median_curves = Vec::new();
    let mut methods = vec![CHOICE_GP];
    if c.sobol_baseline {
        methods.push(SOBOL);
    }
    for (k, method) in methods.into_iter().enumerate() {
        let method_rows: Vec<BoRow> = per.iter().flat_map(|p| p[k].clone()).collect();
        let curve = (0..=c.budget)
            .map(|t| {
                let v: Vec<f64> = method_rows.iter().filter(|r| r.iteration == t).map(|r| r.log_hv_diff).collect();
                median(&v)
            })
            .collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &method_rows {
            w.serialize(row)?;
        }
        let text = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8");
        dir.write_text(&format!("{method}.csv"), &text)?;
        median_curves.push((method.to_string(), curve));
        rows.extend(method_rows);
    }
    let summary = BoSummary { benchmark: problem.name.to_string(), rows, median_curves };
    dir.write_json("median_curves.json", &summary.median_curves)?;
    dir.finish()?;
    Ok(summary)
}

fn run_rep(c: &BoConfig, problem: &BenchmarkProblem, seed: u64, rep: usize) -> HarnessResult<Vec<Vec<BoRow>>> {
    let scaler = UnitScaler::from_bounds(&problem.bounds_tuples())?;
    let to_problem = |opts: &[OptionPoint]| -> Vec<Vec<f64>> { opts.iter().map(|o| scaler.from_unit(&o.coords)).collect() };
    let metric = |opts: &[OptionPoint]| log_hv_difference(&to_problem(opts), problem);

    let session_seed = rep_seed(seed, 0xb0, rep);
    let mut session = BoSession::new(format!("rep{rep}"), c.session_config(problem.n_o, problem.n_x, session_seed))?;
    let init: Vec<OptionPoint> = session.options.clone();
    let g = |u: &[f64]| problem.eval(&scaler.from_unit(u)).expect("unit points map into the bounds");
    let mut channel = OracleChannel::new(g, c.oracle_noise_sd, rep_seed(seed, 0xa9e, rep));
    // initial queries, then one fit and query per iteration, then the
    // closing fit
    let max_steps = 4 * (c.n_init_queries + c.budget + 2);
    let mut steps = 0;
    while session.state != SessionState::Done {
        bo_step(&mut session, &mut channel, Some(&metric))?;
        steps += 1;
        if steps > max_steps {
            return Err(HarnessError::Numeric(format!("rep {rep}: session stuck in {:?}", session.state)));
        }
    }
    let choice_rows = session
        .history
        .iter()
        .map(|h| BoRow {
            method: CHOICE_GP.into(),
            rep,
            iteration: h.iteration,
            n_observed: init.len() + h.iteration,
            log_hv_diff: h.log_hv_diff.expect("metric supplied"),
            n_pareto: Some(h.n_pareto),
            acquisition_max: h.acquisition_max,
            fallback: Some(h.fallback),
        })
        .collect();
    log::info!("bo-run rep {rep}: done after {} fits", session.fits);

    let mut out = vec![choice_rows];
    if c.sobol_baseline {
        let unit = vec![[0.0, 1.0]; problem.n_x];
        let extra = sobol_points(&unit, c.budget, rep_seed(seed, 0x50b, rep));
        let mut observed: Vec<Vec<f64>> = init.iter().map(|o| scaler.from_unit(&o.coords)).collect();
        let mut rows = Vec::with_capacity(c.budget + 1);
        for t in 0..=c.budget {
            if t > 0 {
                observed.push(scaler.from_unit(&extra[t - 1]));
            }
            rows.push(BoRow {
                method: SOBOL.into(),
                rep,
                iteration: t,
                n_observed: observed.len(),
                log_hv_diff: log_hv_difference(&observed, problem)?,
                n_pareto: None,
                acquisition_max: None,
                fallback: None,
            });
        }
        out.push(rows);
    }
    Ok(out)
}
