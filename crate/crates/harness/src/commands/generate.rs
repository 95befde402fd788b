use std::path::Path;

use crate::config::RunConfig;
use crate::error::HarnessResult;
use crate::sources::{generate_rep, rep_files};

use super::{open_run, per_rep};

/// Writes `rep{r}/train_{N}.json`, `rep{r}/test.json` and
/// `rep{r}/oracle.json` for every repetition.
pub fn generate_data(config: &RunConfig, out: &Path, force: bool) -> HarnessResult<Vec<String>> {
    let c = &config.generate_data;
    let mut dir = open_run(config, out, force, "generate-data")?;
    let reps = per_rep(config.threads, c.reps, |r| generate_rep(&c.data, config.seed, r))?;
    let mut written = Vec::new();
    for (r, data) in reps.iter().enumerate() {
        std::fs::create_dir_all(dir.path().join(crate::sources::rep_dir(r)))?;
        for (name, text) in rep_files(r, data)? {
            dir.write_text(&name, &text)?;
            written.push(name);
        }
    }
    dir.finish()?;
    Ok(written)
}
