//! Per-repetition datasets for the accuracy and dimension-selection runs.

use std::path::Path;

use choicebo_core::benchmarks::{
    generate_choice_dataset, ingest_multioutput_csv, sample_choice_sets, toy_objective_1d, toy_objectives,
    BenchmarkProblem, ChoiceDataset, SplitSpec, TOY_BOUNDS,
};
use choicebo_core::domain::ChoiceObservation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{rep_seed, DataConfig, Source};
use crate::error::{HarnessError, HarnessResult};

/// Noisy objective values Oracle-GP is trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleData {
    pub ids: Vec<usize>,
    pub y: Vec<Vec<f64>>,
}

/// One repetition: training sets sharing an option table, a noise-free test
/// set over the same table, and Oracle-GP's observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RepData {
    pub train: Vec<ChoiceDataset>,
    pub test: ChoiceDataset,
    pub oracle: OracleData,
}

impl RepData {
    pub fn options(&self) -> &[Vec<f64>] {
        &self.test.options
    }

    pub fn train_for(&self, n: usize) -> HarnessResult<&ChoiceDataset> {
        self.train
            .iter()
            .find(|d| d.choices.len() == n)
            .ok_or_else(|| HarnessError::Config(format!("no training set of size {n}")))
    }
}

type Objective = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

fn function_source(source: &Source) -> HarnessResult<(Vec<(f64, f64)>, Objective, &'static str)> {
    match source {
        Source::Toy => Ok((vec![TOY_BOUNDS], Box::new(toy_objectives), "toy")),
        Source::Toy1d => Ok((vec![TOY_BOUNDS], Box::new(toy_objective_1d), "toy-1d")),
        Source::Benchmark { name } => {
            let p = BenchmarkProblem::by_name(name).map_err(|e| HarnessError::Config(e.to_string()))?;
            let bounds = p.bounds_tuples();
            let name = p.name;
            Ok((bounds, Box::new(move |x: &[f64]| p.eval(x).expect("options lie in the bounds")), name))
        }
        Source::Csv { .. } => unreachable!("handled by the caller"),
    }
}

/// Builds repetition `rep` from the configured source.
pub fn generate_rep(data: &DataConfig, seed: u64, rep: usize) -> HarnessResult<RepData> {
    validate(data)?;
    if let Source::Csv { path, targets, folds } = &data.source {
        return csv_rep(data, path, targets, *folds, seed, rep);
    }
    let (bounds, g, name) = function_source(&data.source)?;
    let base = rep_seed(seed, 0xda7a, rep);
    // The option table comes from the test set's generator; training sets
    // are relabelled subsets of the same table.
    let test = generate_choice_dataset(&g, &bounds, data.n_options, data.n_test, data.set_size, 0.0, base, name)?;
    let mut train = Vec::new();
    for (k, &n) in data.n_train.iter().enumerate() {
        let s = rep_seed(base, 1 + k as u64, n);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let choices = sample_choice_sets(&test.options, &g, n, data.set_size, data.noise_sd, &mut rng)?;
        train.push(ChoiceDataset { choices, seed: s, ..test.clone() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rep_seed(base, 0x0c, 0));
    let ids: Vec<usize> = (0..test.options.len()).collect();
    let y = noisy(ids.iter().map(|&i| g(&test.options[i])), data.noise_sd, &mut rng)?;
    Ok(RepData { train, test, oracle: OracleData { ids, y } })
}

fn csv_rep(data: &DataConfig, path: &Path, targets: &[String], folds: usize, seed: u64, rep: usize) -> HarnessResult<RepData> {
    let n_max = data.n_train.iter().copied().max().unwrap_or(0);
    let split = SplitSpec {
        folds,
        fold: rep % folds.max(1),
        n_train: n_max,
        n_test: data.n_test,
        set_size: data.set_size,
        noise_sd: data.noise_sd,
        seed: rep_seed(seed, 0xc5f, rep / folds.max(1)),
    };
    let fold = ingest_multioutput_csv(path, targets, &split)?;
    let generator = format!("csv:{}", path.display());
    let dataset = |choices: Vec<ChoiceObservation>| ChoiceDataset {
        n_x: fold.n_x,
        options: fold.options.clone(),
        choices,
        seed: split.seed,
        generator: generator.clone(),
    };
    // Smaller training sets are prefixes of the largest.
    let train = data.n_train.iter().map(|&n| dataset(fold.train[..n].to_vec())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rep_seed(split.seed, 0x0c, 0));
    let y = noisy(fold.train_ids.iter().map(|&i| fold.targets[i].clone()), data.noise_sd, &mut rng)?;
    Ok(RepData {
        train,
        test: dataset(fold.test.clone()),
        oracle: OracleData { ids: fold.train_ids.clone(), y },
    })
}

fn noisy(values: impl Iterator<Item = Vec<f64>>, sd: f64, rng: &mut ChaCha8Rng) -> HarnessResult<Vec<Vec<f64>>> {
    let normal = Normal::new(0.0, sd).map_err(|e| HarnessError::Config(format!("noise_sd: {e}")))?;
    Ok(values.map(|v| v.into_iter().map(|x| x + normal.sample(rng)).collect()).collect())
}

fn validate(data: &DataConfig) -> HarnessResult<()> {
    if data.n_train.is_empty() || data.n_train.contains(&0) || data.n_test == 0 {
        return Err(HarnessError::Config("n_train entries and n_test must be positive".into()));
    }
    if !(data.noise_sd >= 0.0 && data.noise_sd.is_finite()) {
        return Err(HarnessError::Config("noise_sd must be finite and non-negative".into()));
    }
    Ok(())
}

pub fn train_file(n: usize) -> String {
    format!("train_{n}.json")
}

pub const TEST_FILE: &str = "test.json";
pub const ORACLE_FILE: &str = "oracle.json";

pub fn rep_dir(rep: usize) -> String {
    format!("rep{rep}")
}

/// `(relative path, contents)` for every file describing a repetition.
pub fn rep_files(rep: usize, data: &RepData) -> HarnessResult<Vec<(String, String)>> {
    let dir = rep_dir(rep);
    let mut out = Vec::new();
    for d in &data.train {
        out.push((format!("{dir}/{}", train_file(d.choices.len())), d.to_json()? + "\n"));
    }
    out.push((format!("{dir}/{TEST_FILE}"), data.test.to_json()? + "\n"));
    out.push((format!("{dir}/{ORACLE_FILE}"), serde_json::to_string_pretty(&data.oracle)? + "\n"));
    Ok(out)
}

/// Reads repetition `rep` as written by `generate-data`.
pub fn load_rep(dir: &Path, rep: usize, n_train: &[usize]) -> HarnessResult<RepData> {
    let base = dir.join(rep_dir(rep));
    let read = |name: &str| {
        let p = base.join(name);
        std::fs::read_to_string(&p).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))
    };
    let train = n_train
        .iter()
        .map(|&n| Ok(ChoiceDataset::from_json(&read(&train_file(n))?)?))
        .collect::<HarnessResult<Vec<_>>>()?;
    let test = ChoiceDataset::from_json(&read(TEST_FILE)?)?;
    let oracle: OracleData = serde_json::from_str(&read(ORACLE_FILE)?)?;
    if train.iter().any(|t| t.options != test.options) {
        return Err(HarnessError::Config(format!("{}: training and test option tables differ", base.display())));
    }
    Ok(RepData { train, test, oracle })
}
