use std::path::Path;

use choicebo_core::benchmarks::accuracy;
use choicebo_core::domain::ChoiceObservation;
use choicebo_core::inference::{fit_choice_model, predict_choice, FitConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{rep_seed, RunConfig};
use crate::error::HarnessResult;
use crate::oracle_gp::OracleGp;
use crate::sources::{generate_rep, load_rep, rep_dir, rep_files, RepData};

use super::{compact, mean, open_run, per_rep, set_points};

pub const CHOICE_PREFIX: &str = "Choice-GP";
pub const ORACLE_COLUMN: &str = "Oracle-GP";

/// Test accuracy per repetition (rows) and model (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl AccuracyReport {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> HarnessResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["rep".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (r, row) in self.rows.iter().enumerate() {
            let mut rec = vec![r.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8"))
    }
}

/// Fits Choice-GP on each training set and Oracle-GP on the objective
/// observations, and scores both on the noise-free test choices.
pub fn fit_eval(config: &RunConfig, out: &Path, force: bool) -> HarnessResult<AccuracyReport> {
    let c = &config.fit_eval;
    let mut dir = open_run(config, out, force, "fit-eval")?;
    let rows = per_rep(config.threads, c.reps, |r| {
        let data = match &c.data_dir {
            Some(d) => load_rep(d, r, &c.data.n_train)?,
            None => generate_rep(&c.data, config.seed, r)?,
        };
        let mut row = Vec::new();
        for (k, &n) in c.data.n_train.iter().enumerate() {
            let fit = FitConfig { seed: rep_seed(config.seed, 0xf17 + k as u64, r), ..c.fit.clone() };
            row.push(choice_gp_accuracy(&data, n, c.n_e, &fit)?);
        }
        row.push(oracle_gp_accuracy(&data, c, rep_seed(config.seed, 0x0acc, r))?);
        log::info!("fit-eval rep {r}: {row:?}");
        Ok((data, row))
    })?;
    if c.data_dir.is_none() {
        for (r, (data, _)) in rows.iter().enumerate() {
            std::fs::create_dir_all(dir.path().join(rep_dir(r)))?;
            for (name, text) in rep_files(r, data)? {
                dir.write_text(&name, &text)?;
            }
        }
    }
    let mut columns: Vec<String> = c.data.n_train.iter().map(|n| format!("{CHOICE_PREFIX}{n}")).collect();
    columns.push(ORACLE_COLUMN.into());
    let rows: Vec<Vec<f64>> = rows.into_iter().map(|(_, row)| row).collect();
    let stats = |j: usize| {
        let v: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let m = mean(&v);
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len().max(2) - 1) as f64;
        (m, var.sqrt())
    };
    let (means, sds) = (0..columns.len()).map(stats).unzip();
    let report = AccuracyReport { columns, rows, mean: means, sd: sds };
    dir.write_json("accuracy.json", &report)?;
    dir.write_text("accuracy.csv", &report.to_csv()?)?;
    dir.finish()?;
    Ok(report)
}

fn choice_gp_accuracy(data: &RepData, n: usize, n_e: usize, fit: &FitConfig) -> HarnessResult<f64> {
    let train = data.train_for(n)?;
    let (choices, points) = compact(&train.choices, &train.options)?;
    let post = fit_choice_model(&choices, &points, n_e, fit)?;
    let predicted = data
        .test
        .choices
        .iter()
        .enumerate()
        .map(|(l, obs)| Ok(predict_choice(&post, &set_points(obs, data.options())?, rep_seed(fit.seed, 0x9e, l))?))
        .collect::<HarnessResult<Vec<ChoiceObservation>>>()?;
    Ok(accuracy(&predicted, &data.test.choices)?)
}

fn oracle_gp_accuracy(data: &RepData, c: &crate::config::FitEvalConfig, seed: u64) -> HarnessResult<f64> {
    let x: Vec<Vec<f64>> = data.oracle.ids.iter().map(|&i| data.options()[i].clone()).collect();
    let gp = OracleGp::fit(&x, &data.oracle.y, c.data.noise_sd, &c.oracle)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let predicted = data
        .test
        .choices
        .iter()
        .map(|obs| gp.predict_choice(&set_points(obs, data.options())?, c.oracle.n_draws, &mut rng))
        .collect::<HarnessResult<Vec<_>>>()?;
    Ok(accuracy(&predicted, &data.test.choices)?)
}
