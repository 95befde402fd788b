//! Run configuration: scale presets, JSON overrides and the resolved copy
//! written next to every result.

use std::path::{Path, PathBuf};

use choicebo_core::inference::FitConfig;
use choicebo_core::mobo::{AcquisitionConfig, SessionConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{HarnessError, HarnessResult};

/// Where options and ground-truth objectives come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Source {
    /// `[cos 2x, -sin 2x]` on [-4.5, 4.5].
    Toy,
    /// `cos 2x` on [-4.5, 4.5].
    Toy1d,
    /// A named benchmark, converted to maximisation.
    Benchmark { name: String },
    /// A multi-output table; `targets` name the objective columns, which are
    /// treated as quantities to maximise. Repetition `r` uses fold `r % folds`.
    Csv { path: PathBuf, targets: Vec<String>, folds: usize },
}

/// How one repetition's choice data is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub source: Source,
    /// Options sampled per repetition (ignored for CSV sources).
    pub n_options: usize,
    /// One training set per entry.
    pub n_train: Vec<usize>,
    pub n_test: usize,
    pub set_size: usize,
    /// Noise on the objectives when labelling training choices and when
    /// giving Oracle-GP its observations. Test choices are noise-free.
    pub noise_sd: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: Source::Toy,
            n_options: 200,
            n_train: vec![100, 300],
            n_test: 300,
            set_size: 3,
            noise_sd: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub data: DataConfig,
    pub reps: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self { data: DataConfig::default(), reps: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleGpConfig {
    pub n_lengthscales: usize,
    /// Lengthscale grid, as fractions of the widest input range.
    pub lengthscale_range: [f64; 2],
    pub n_variances: usize,
    /// Signal-variance grid for the standardised targets.
    pub variance_range: [f64; 2],
    pub n_draws: usize,
}

impl Default for OracleGpConfig {
    fn default() -> Self {
        Self {
            n_lengthscales: 20,
            lengthscale_range: [0.01, 2.0],
            n_variances: 10,
            variance_range: [0.1, 10.0],
            n_draws: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitEvalConfig {
    pub data: DataConfig,
    /// Read datasets written by `generate-data` instead of generating them.
    pub data_dir: Option<PathBuf>,
    pub reps: usize,
    pub n_e: usize,
    pub fit: FitConfig,
    pub oracle: OracleGpConfig,
}

impl Default for FitEvalConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            data_dir: None,
            reps: 3,
            n_e: 2,
            fit: desk_fit(),
            oracle: OracleGpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    pub data: DataConfig,
    pub data_dir: Option<PathBuf>,
    pub reps: usize,
    pub ne_max: usize,
    pub fit: FitConfig,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            data: DataConfig { source: Source::Toy1d, n_train: vec![300], ..DataConfig::default() },
            data_dir: None,
            reps: 5,
            ne_max: 4,
            fit: desk_fit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub benchmark: String,
    pub reps: usize,
    /// BO iterations after the initial queries.
    pub budget: usize,
    pub n_init: usize,
    pub n_init_queries: usize,
    /// Objective noise of the simulated agent answering queries.
    pub oracle_noise_sd: f64,
    /// `0` runs `n_e = n_o`.
    pub n_e: usize,
    pub refit_every: usize,
    pub vi_refit_steps: Option<usize>,
    pub fit: FitConfig,
    pub acquisition: AcquisitionConfig,
    pub sobol_baseline: bool,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            benchmark: "branin-currin".into(),
            reps: 5,
            budget: 40,
            n_init: 20,
            n_init_queries: 7,
            oracle_noise_sd: 0.0,
            n_e: 0,
            refit_every: 5,
            vi_refit_steps: Some(100),
            fit: FitConfig { vi_steps: 300, ess_burnin: 100, ess_samples: 300, ess_thin: 1, ..FitConfig::default() },
            acquisition: AcquisitionConfig { n_sobol: 256, refine_steps: 20, max_draws: 64, ..AcquisitionConfig::default() },
            sobol_baseline: true,
        }
    }
}

impl BoConfig {
    pub fn session_config(&self, n_o: usize, n_x: usize, seed: u64) -> SessionConfig {
        use choicebo_core::mobo::LatentDimSpec;
        SessionConfig {
            bounds: vec![[0.0, 1.0]; n_x],
            n_e: LatentDimSpec::Fixed(if self.n_e == 0 { n_o } else { self.n_e }),
            n_init: self.n_init,
            n_init_queries: self.n_init_queries,
            max_iterations: Some(self.budget),
            refit_every: self.refit_every,
            vi_refit_steps: self.vi_refit_steps,
            fit: self.fit.clone(),
            acquisition: self.acquisition.clone(),
            seed,
            ..SessionConfig::default()
        }
    }
}

fn desk_fit() -> FitConfig {
    FitConfig { vi_steps: 300, vi_mc_samples: 4, ess_burnin: 500, ess_samples: 1000, ess_thin: 2, ..FitConfig::default() }
}

/// Every command's parameters. A resolved copy is written with each run, so
/// passing it back through `--config` reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for repetitions; `0` uses all cores.
    pub threads: usize,
    pub generate_data: GenerateConfig,
    pub fit_eval: FitEvalConfig,
    pub select_dim: SelectConfig,
    pub bo_run: BoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            generate_data: GenerateConfig::default(),
            fit_eval: FitEvalConfig::default(),
            select_dim: SelectConfig::default(),
            bo_run: BoConfig::default(),
        }
    }
}

impl RunConfig {
    /// Desk-scale defaults: fewer repetitions and a shorter BO budget.
    pub fn desk() -> Self {
        Self::default()
    }

    /// The experimental protocol at full size.
    pub fn full_scale() -> Self {
        let mut c = Self::default();
        c.generate_data.reps = 5;
        c.fit_eval.reps = 5;
        c.fit_eval.fit = FitConfig::default();
        c.select_dim.reps = 10;
        c.select_dim.fit = FitConfig::default();
        c.bo_run.reps = 15;
        c.bo_run.budget = 80;
        c.bo_run.vi_refit_steps = None;
        c.bo_run.fit = FitConfig::default();
        c.bo_run.acquisition = AcquisitionConfig::default();
        c
    }

    /// Preset, then the JSON file (deep-merged), then the seed override.
    pub fn resolve(full: bool, file: Option<&Path>, seed: Option<u64>) -> HarnessResult<Self> {
        let preset = if full { Self::full_scale() } else { Self::desk() };
        let mut value = serde_json::to_value(&preset)?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Io(format!("reading {}: {e}", path.display())))?;
            let overlay: Value = serde_json::from_str(&text)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut value, overlay);
        }
        let mut config: Self = serde_json::from_value(value).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(s) = seed {
            config.seed = s;
        }
        Ok(config)
    }
}

/// Recursive object merge; non-object values in `overlay` replace.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Seed for repetition `rep` of a stream named by `tag`.
pub fn rep_seed(seed: u64, tag: u64, rep: usize) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (rep as u64).wrapping_mul(0xd1b5_4a32_d192_ed03);
    // splitmix64 finaliser
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
