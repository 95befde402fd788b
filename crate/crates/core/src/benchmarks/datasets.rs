use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{option_table, simulate_choice, ChoiceObservation, OptionPoint, UnitScaler};
use crate::error::{Error, Result};

/// Options plus labelled choice sets, in the on-disk dataset schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDataset {
    pub n_x: usize,
    pub options: Vec<Vec<f64>>,
    pub choices: Vec<ChoiceObservation>,
    pub seed: u64,
    pub generator: String,
}

impl ChoiceDataset {
    pub fn option_table(&self) -> Result<Vec<OptionPoint>> {
        option_table(self.options.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ds: Self = serde_json::from_str(text)?;
        if ds.options.iter().any(|o| o.len() != ds.n_x) {
            return Err(Error::Schema("option rows must have n_x coordinates".into()));
        }
        for c in &ds.choices {
            c.validate()?;
            if c.max_id() >= ds.options.len() {
                return Err(Error::Index { index: c.max_id(), len: ds.options.len() });
            }
        }
        Ok(ds)
    }
}

/// Draws `n` random subsets of `set_size` distinct options and labels each
/// with the noisy Pareto oracle applied to `g`.
pub fn sample_choice_sets<R, G>(
    options: &[Vec<f64>],
    g: G,
    n: usize,
    set_size: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<Vec<ChoiceObservation>>
where
    R: Rng + ?Sized,
    G: Fn(&[f64]) -> Vec<f64>,
{
    sample_choice_sets_from(options, &(0..options.len()).collect::<Vec<_>>(), g, n, set_size, noise_sd, rng)
}

/// As [`sample_choice_sets`], restricted to the option ids in `pool`.
pub fn sample_choice_sets_from<R, G>(
    options: &[Vec<f64>],
    pool: &[usize],
    g: G,
    n: usize,
    set_size: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<Vec<ChoiceObservation>>
where
    R: Rng + ?Sized,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if set_size == 0 || set_size > pool.len() {
        return Err(Error::param(format!("set size {set_size} must be in 1..={}", pool.len())));
    }
    if let Some(&bad) = pool.iter().find(|&&i| i >= options.len()) {
        return Err(Error::Index { index: bad, len: options.len() });
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let ids: Vec<usize> = index::sample(rng, pool.len(), set_size).into_iter().map(|k| pool[k]).collect();
        let set: Vec<OptionPoint> = ids
            .iter()
            .map(|&id| OptionPoint { id, coords: options[id].clone() })
            .collect();
        out.push(simulate_choice(&set, &g, noise_sd, rng)?);
    }
    Ok(out)
}

/// Uniform options in `bounds` and `n_choices` labelled subsets.
#[allow(clippy::too_many_arguments)]
pub fn generate_choice_dataset<G>(
    g: G,
    bounds: &[(f64, f64)],
    n_options: usize,
    n_choices: usize,
    set_size: usize,
    noise_sd: f64,
    seed: u64,
    generator: &str,
) -> Result<ChoiceDataset>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let scaler = UnitScaler::from_bounds(bounds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let options: Vec<Vec<f64>> = (0..n_options)
        .map(|_| {
            let u: Vec<f64> = (0..bounds.len()).map(|_| rng.random::<f64>()).collect();
            scaler.from_unit(&u)
        })
        .collect();
    let choices = sample_choice_sets(&options, g, n_choices, set_size, noise_sd, &mut rng)?;
    Ok(ChoiceDataset {
        n_x: bounds.len(),
        options,
        choices,
        seed,
        generator: generator.to_string(),
    })
}

/// `[cos 2x, -sin 2x]`, the two-objective toy.
pub fn toy_objectives(x: &[f64]) -> Vec<f64> {
    vec![(2.0 * x[0]).cos(), -(2.0 * x[0]).sin()]
}

/// `cos 2x`, the single-objective toy.
pub fn toy_objective_1d(x: &[f64]) -> Vec<f64> {
    vec![(2.0 * x[0]).cos()]
}

pub const TOY_BOUNDS: (f64, f64) = (-4.5, 4.5);

/// How a multi-output table is split into folds and turned into choices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub folds: usize,
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub set_size: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { folds: 5, fold: 0, n_train: 100, n_test: 200, set_size: 3, noise_sd: 0.0, seed: 0 }
    }
}

/// One cross-validation fold of an ingested table. Option ids index
/// `options`, which holds every row of the file in scaled feature space.
#[derive(Debug, Clone)]
pub struct IngestedFold {
    pub n_x: usize,
    pub feature_columns: Vec<String>,
    pub target_columns: Vec<String>,
    pub options: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub train: Vec<ChoiceObservation>,
    pub test: Vec<ChoiceObservation>,
}

/// Shuffled k-fold assignment; row `i` is in test fold `fold_of[i]`.
pub fn fold_assignment(n_rows: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n_rows];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % folds;
    }
    fold_of
}

/// Reads a comma-separated table with a header row. Columns named in
/// `target_columns` become the objectives; all others are features.
pub fn read_multioutput_csv(path: &Path, target_columns: &[String]) -> Result<(Vec<String>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_error)?;
    let header: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Schema("missing header row".into()));
    }
    if target_columns.is_empty() {
        return Err(Error::Schema("no target columns given".into()));
    }
    let mut target_idx = Vec::new();
    for t in target_columns {
        let i = header
            .iter()
            .position(|h| h == t)
            .ok_or_else(|| Error::Schema(format!("target column '{t}' not in header")))?;
        target_idx.push(i);
    }
    let feature_idx: Vec<usize> = (0..header.len()).filter(|i| !target_idx.contains(i)).collect();
    if feature_idx.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        // Row numbers are 1-based data rows; the header is row 0.
        let row = r + 1;
        let rec = rec.map_err(csv_error)?;
        if rec.len() != header.len() {
            return Err(Error::Parse { row, col: rec.len().min(header.len()), msg: format!("expected {} fields, found {}", header.len(), rec.len()) });
        }
        let cell = |c: usize| -> Result<f64> {
            let s = rec[c].trim();
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse { row, col: c, msg: format!("non-numeric cell '{s}'") }),
            }
        };
        features.push(feature_idx.iter().map(|&c| cell(c)).collect::<Result<Vec<_>>>()?);
        targets.push(target_idx.iter().map(|&c| cell(c)).collect::<Result<Vec<_>>>()?);
    }
    if features.is_empty() {
        return Err(Error::Schema("file has a header but no data rows".into()));
    }
    let names = feature_idx.iter().map(|&i| header[i].clone()).collect();
    Ok((names, features, targets))
}

fn csv_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        },
        _ => {
            let row = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { row, col: 0, msg: e.to_string() }
        }
    }
}

/// Loads the table, scales features to the unit cube and builds the train
/// and test choice sets for one fold. Targets are used as maximisation
/// objectives as they appear in the file.
pub fn ingest_multioutput_csv(path: &Path, target_columns: &[String], split: &SplitSpec) -> Result<IngestedFold> {
    if split.folds < 2 || split.fold >= split.folds {
        return Err(Error::param(format!("fold {} of {} is not valid", split.fold, split.folds)));
    }
    let (feature_columns, raw, targets) = read_multioutput_csv(path, target_columns)?;
    let scaler = UnitScaler::fit(&raw)?;
    let options: Vec<Vec<f64>> = raw.iter().map(|r| scaler.to_unit(r)).collect();
    let fold_of = fold_assignment(options.len(), split.folds, split.seed);
    let test_ids: Vec<usize> = (0..options.len()).filter(|&i| fold_of[i] == split.fold).collect();
    let train_ids: Vec<usize> = (0..options.len()).filter(|&i| fold_of[i] != split.fold).collect();

    let lookup = |x: &[f64]| -> Vec<f64> {
        let i = options.iter().position(|o| o.as_slice() == x).expect("option row");
        targets[i].clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(split.seed ^ 0xc5f0_1d00 ^ split.fold as u64);
    let train = sample_choice_sets_from(&options, &train_ids, lookup, split.n_train, split.set_size, split.noise_sd, &mut rng)?;
    let test = sample_choice_sets_from(&options, &test_ids, lookup, split.n_test, split.set_size, 0.0, &mut rng)?;
    Ok(IngestedFold {
        n_x: feature_columns.len(),
        feature_columns,
        target_columns: target_columns.to_vec(),
        options,
        targets,
        train_ids,
        test_ids,
        train,
        test,
    })
}
