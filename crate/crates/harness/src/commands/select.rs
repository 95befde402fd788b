use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use choicebo_core::benchmarks::accuracy;
use choicebo_core::inference::{predict_choice, FitConfig};
use choicebo_core::selection::select_latent_dimension_with;
use serde::{Deserialize, Serialize};

use crate::config::{rep_seed, RunConfig};
use crate::error::HarnessResult;
use crate::sources::{generate_rep, load_rep};

use super::{compact, mean, open_run, per_rep, set_points};

/// One fitted latent dimension in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectRow {
    pub n_train: usize,
    pub rep: usize,
    pub n_e: usize,
    pub psis_loo: f64,
    pub flagged: usize,
    pub test_accuracy: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectSummary {
    pub rows: Vec<SelectRow>,
    /// Per training size: how often each dimension was selected.
    pub selections: BTreeMap<usize, BTreeMap<usize, usize>>,
    /// Per training size, the selected dimension of each repetition.
    pub selected: BTreeMap<usize, Vec<usize>>,
    pub table: String,
}

/// Forward latent-dimension selection by PSIS-LOO, with the test accuracy
/// of every fitted dimension.
pub fn select_dim(config: &RunConfig, out: &Path, force: bool) -> HarnessResult<SelectSummary> {
    let c = &config.select_dim;
    let mut dir = open_run(config, out, force, "select-dim")?;
    let per = per_rep(config.threads, c.reps, |r| {
        let data = match &c.data_dir {
            Some(d) => load_rep(d, r, &c.data.n_train)?,
            None => generate_rep(&c.data, config.seed, r)?,
        };
        let mut rows = Vec::new();
        for (k, &n) in c.data.n_train.iter().enumerate() {
            let train = data.train_for(n)?;
            let (choices, points) = compact(&train.choices, &train.options)?;
            let fit = FitConfig { seed: rep_seed(config.seed, 0x5e1 + k as u64, r), ..c.fit.clone() };
            let mut fitted = Vec::new();
            let sel = select_latent_dimension_with(&choices, &points, c.ne_max, &fit, |post, report| {
                let acc = data
                    .test
                    .choices
                    .iter()
                    .enumerate()
                    .map(|(l, obs)| Ok(predict_choice(post, &set_points(obs, data.options())?, rep_seed(fit.seed, 0x9e, l))?))
                    .collect::<HarnessResult<Vec<_>>>()
                    .and_then(|p| Ok(accuracy(&p, &data.test.choices)?));
                fitted.push((report.clone(), acc));
            })?;
            for (report, acc) in fitted {
                rows.push(SelectRow {
                    n_train: n,
                    rep: r,
                    n_e: report.n_e,
                    psis_loo: report.total,
                    flagged: report.flagged.len(),
                    test_accuracy: acc?,
                    selected: report.n_e == sel.selected,
                });
            }
            log::info!("select-dim rep {r}, N = {n}: selected n_e = {}", sel.selected);
        }
        Ok(rows)
    })?;
    let rows: Vec<SelectRow> = per.into_iter().flatten().collect();

    let mut selections: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    let mut selected: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.selected) {
        *selections.entry(row.n_train).or_default().entry(row.n_e).or_default() += 1;
        selected.entry(row.n_train).or_default().push(row.n_e);
    }
    let table = render_table(&rows, c.reps);
    let summary = SelectSummary { rows, selections, selected, table };

    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &summary.rows {
        w.serialize(row)?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8");
    dir.write_text("table.csv", &text)?;
    dir.write_text("table.txt", &summary.table)?;
    dir.write_json("summary.json", &summary)?;
    dir.finish()?;
    Ok(summary)
}

/// Mean PSIS-LOO, flagged count and accuracy per `(N, n_e)`, with the
/// number of repetitions that fitted and selected each dimension.
fn render_table(rows: &[SelectRow], reps: usize) -> String {
    let mut groups: BTreeMap<(usize, usize), Vec<&SelectRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.n_train, r.n_e)).or_default().push(r);
    }
    let mut s = String::new();
    let _ = writeln!(s, "{:>6} {:>4} {:>12} {:>8} {:>9} {:>7} {:>9}", "N", "n_e", "PSIS-LOO", "flagged", "accuracy", "fitted", "selected");
    for ((n, ne), g) in &groups {
        let loo: Vec<f64> = g.iter().map(|r| r.psis_loo).collect();
        let flagged: Vec<f64> = g.iter().map(|r| r.flagged as f64).collect();
        let acc: Vec<f64> = g.iter().map(|r| r.test_accuracy).collect();
        let chosen = g.iter().filter(|r| r.selected).count();
        let _ = writeln!(
            s,
            "{n:>6} {ne:>4} {:>12.2} {:>8.1} {:>9.3} {:>7} {:>9}",
            mean(&loo),
            mean(&flagged),
            mean(&acc),
            format!("{}/{reps}", g.len()),
            format!("{chosen}/{reps}")
        );
    }
    s
}
