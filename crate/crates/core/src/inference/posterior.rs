use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EssDiagnostics;
use crate::domain::{pareto_indices, ChoiceObservation, OptionPoint};
use crate::error::{Error, Result};
use crate::gp::{whitened_of, GpModel, KernelParams, LatentMatrix};
use crate::likelihood::{ChoiceLikelihood, CompiledObs, LikelihoodConfig, Workspace};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDiagnostics {
    pub ess: EssDiagnostics,
    pub elbo_trace: Vec<f64>,
}

/// Posterior latent samples at the training options, with the
/// hyperparameters they were drawn under.
#[derive(Debug, Clone)]
pub struct SurrogatePosterior {
    model: GpModel,
    train_points: Vec<OptionPoint>,
    samples: Vec<LatentMatrix>,
    diagnostics: PosteriorDiagnostics,
    seed: u64,
}

impl SurrogatePosterior {
    pub(crate) fn from_parts(
        model: GpModel,
        train_points: Vec<OptionPoint>,
        samples: Vec<LatentMatrix>,
        ess: EssDiagnostics,
        seed: u64,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("no posterior samples"));
        }
        Ok(Self {
            model,
            train_points,
            samples,
            diagnostics: PosteriorDiagnostics { ess, elbo_trace: Vec::new() },
            seed,
        })
    }

    /// Wraps given latent realisations (for example a frozen or externally
    /// computed posterior). Realisations without a whitened form are
    /// whitened under `params`.
    pub fn from_samples(train_points: &[OptionPoint], params: KernelParams, samples: Vec<LatentMatrix>) -> Result<Self> {
        let model = GpModel::new(train_points, params)?;
        let samples = samples
            .into_iter()
            .map(|s| {
                if s.rows() != model.n_train() || s.n_e() != model.n_e() {
                    return Err(Error::Dimension { expected: model.n_train(), got: s.rows() });
                }
                let u = whitened_of(&model, &s)?;
                Ok(LatentMatrix::from_whitened(u, model.factors())?)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(model, train_points.to_vec(), samples, EssDiagnostics::default(), 0)
    }

    pub fn params(&self) -> &KernelParams {
        self.model.params()
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn train_points(&self) -> &[OptionPoint] {
        &self.train_points
    }

    pub fn samples(&self) -> &[LatentMatrix] {
        &self.samples
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_e(&self) -> usize {
        self.model.n_e()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn diagnostics(&self) -> &PosteriorDiagnostics {
        &self.diagnostics
    }

    pub fn set_elbo_trace(&mut self, trace: Vec<f64>) {
        self.diagnostics.elbo_trace = trace;
    }

    /// Sample mean of the latents, `m × n_e`.
    pub fn posterior_mean(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.model.n_train(), self.n_e());
        for s in &self.samples {
            acc += s.values();
        }
        acc / self.samples.len() as f64
    }

    pub(crate) fn likelihood(&self) -> Result<ChoiceLikelihood> {
        ChoiceLikelihood::new(LikelihoodConfig::with_noise(self.params().noise_sd))
    }

    pub fn to_json(&self) -> Result<String> {
        let (m, n_e) = (self.model.n_train(), self.n_e());
        let mut bytes = Vec::with_capacity(self.samples.len() * m * n_e * 8);
        for s in &self.samples {
            let u = s.whitened().expect("stored samples carry whitened values");
            for v in u.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let doc = ModelDocument {
            schema_version: MODEL_SCHEMA_VERSION,
            option_table: self.train_points.iter().map(|p| p.coords.clone()).collect(),
            hyperparameters: self.params().clone(),
            n_samples: self.samples.len(),
            rows: m,
            n_e,
            whitened_samples: B64.encode(bytes),
            seed: self.seed,
            diagnostics: self.diagnostics.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    /// Rebuilds the posterior; latent values are recomputed from the
    /// whitened samples under the stored hyperparameters.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "model schema version {} is not supported (expected {MODEL_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        let bytes = B64.decode(doc.whitened_samples.as_bytes()).map_err(|e| Error::Schema(e.to_string()))?;
        let per = doc.rows * doc.n_e;
        if bytes.len() != doc.n_samples * per * 8 || doc.option_table.len() != doc.rows {
            return Err(Error::Schema("sample payload does not match declared shape".into()));
        }
        let points = crate::domain::option_table(doc.option_table)?;
        let model = GpModel::new(&points, doc.hyperparameters)?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let samples = values
            .chunks_exact(per.max(1))
            .take(doc.n_samples)
            .map(|chunk| LatentMatrix::from_whitened(DMatrix::from_column_slice(doc.rows, doc.n_e, chunk), model.factors()))
            .collect::<Result<Vec<_>>>()?;
        let mut post = Self::from_parts(model, points, samples, doc.diagnostics.ess.clone(), doc.seed)?;
        post.diagnostics = doc.diagnostics;
        Ok(post)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    schema_version: u32,
    option_table: Vec<Vec<f64>>,
    hyperparameters: KernelParams,
    n_samples: usize,
    rows: usize,
    n_e: usize,
    /// Little-endian f64, sample-major, each sample column-major.
    whitened_samples: String,
    seed: u64,
    diagnostics: PosteriorDiagnostics,
}

/// One joint predictive draw of the test latents per posterior sample,
/// each `n_test × n_e`.
pub fn predict_latents(post: &SurrogatePosterior, test_points: &[OptionPoint], seed: u64) -> Result<Vec<DMatrix<f64>>> {
    let coords: Vec<Vec<f64>> = test_points.iter().map(|p| p.coords.clone()).collect();
    let cond = post.model.conditional(&coords)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(post
        .samples
        .iter()
        .map(|s| cond.draw(s.whitened().expect("stored samples carry whitened values"), &mut rng))
        .collect())
}

/// Posterior predictive probability of choosing `chosen` (ids of members
/// of `set`) from `set`. Returns the mean and the per-sample values.
pub fn choice_probability(
    post: &SurrogatePosterior,
    set: &[OptionPoint],
    chosen: &[usize],
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let ids: Vec<usize> = set.iter().map(|p| p.id).collect();
    let obs = ChoiceObservation::new(ids.clone(), chosen.to_vec())?;
    // positions within `set` index the rows of each predictive draw
    let pos = |id: usize| ids.iter().position(|&x| x == id).expect("validated membership");
    let compiled = CompiledObs {
        chosen: obs.chosen().iter().map(|&c| pos(c)).collect(),
        rejected: obs.rejected().into_iter().map(pos).collect(),
    };
    let lik = post.likelihood()?;
    let draws = predict_latents(post, set, seed)?;
    let mut ws = Workspace::default();
    let per = draws
        .iter()
        .map(|f| Ok(lik.compiled_log_lik(&compiled, f, &mut ws, None)?.exp()))
        .collect::<Result<Vec<f64>>>()?;
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((mean, per))
}

/// Most frequent non-dominated subset across latent draws (rows indexed
/// like `ids`). Ties go to the smaller subset, then lexicographic order.
pub fn modal_pareto_subset(draws: &[DMatrix<f64>], ids: &[usize]) -> Vec<usize> {
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for f in draws {
        let front = pareto_indices(f.nrows(), f.ncols(), |i, d| f[(i, d)]);
        let mut set: Vec<usize> = front.into_iter().map(|i| ids[i]).collect();
        set.sort_unstable();
        *counts.entry(set).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|(a, ca), (b, cb)| ca.cmp(cb).then(b.len().cmp(&a.len())).then(b.cmp(a)))
        .map(|(s, _)| s)
        .unwrap_or_default()
}

/// Point prediction of the choice from `set`: the modal non-dominated
/// subset under the posterior predictive.
pub fn predict_choice(post: &SurrogatePosterior, set: &[OptionPoint], seed: u64) -> Result<ChoiceObservation> {
    if set.is_empty() {
        return Err(Error::EmptyInput("empty option set"));
    }
    let ids: Vec<usize> = set.iter().map(|p| p.id).collect();
    let draws = predict_latents(post, set, seed)?;
    let chosen = modal_pareto_subset(&draws, &ids);
    ChoiceObservation::new(ids, chosen)
}
