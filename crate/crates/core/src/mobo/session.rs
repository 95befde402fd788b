use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_query, check_bounds, estimate_pareto_set, optimize_acquisition, AcquisitionConfig, ParetoEstimate};
use crate::domain::{simulate_choice, ChoiceObservation, OptionPoint};
use crate::error::{Error, Result};
use crate::inference::{
    fit_hyperparameters_from, sample_posterior_from, FitConfig, SurrogatePosterior, VariationalState,
};
use crate::selection::select_latent_dimension;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionState {
    Initializing,
    AwaitingChoice,
    Fitting,
    Ready,
    Done,
}

/// Fixed latent dimension, or `"auto"` for forward selection at the first
/// fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentDimSpec {
    Fixed(usize),
    Auto,
}

impl Serialize for LatentDimSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Fixed(n) => s.serialize_u64(*n as u64),
            Self::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for LatentDimSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Self::Fixed(n)),
            Raw::S(s) if s == "auto" => Ok(Self::Auto),
            Raw::S(s) => Err(serde::de::Error::custom(format!("expected a positive integer or \"auto\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub bounds: Vec<[f64; 2]>,
    pub n_e: LatentDimSpec,
    pub ne_max: usize,
    pub n_init: usize,
    pub n_init_queries: usize,
    pub init_query_size: usize,
    /// BO iterations after initialisation; unbounded when absent.
    pub max_iterations: Option<usize>,
    /// Hyperparameters are refit every this many BO iterations.
    pub refit_every: usize,
    /// VI steps for warm-started refits; `fit.vi_steps` when absent.
    pub vi_refit_steps: Option<usize>,
    pub fit: FitConfig,
    pub acquisition: AcquisitionConfig,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            bounds: vec![[0.0, 1.0]],
            n_e: LatentDimSpec::Fixed(2),
            ne_max: 4,
            n_init: 20,
            n_init_queries: 7,
            init_query_size: 5,
            max_iterations: None,
            refit_every: 5,
            vi_refit_steps: None,
            fit: FitConfig::default(),
            acquisition: AcquisitionConfig::default(),
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        check_bounds(&self.bounds)?;
        if let LatentDimSpec::Fixed(0) = self.n_e {
            return Err(Error::param("n_e must be at least 1"));
        }
        if self.ne_max == 0 || self.refit_every == 0 {
            return Err(Error::param("ne_max and refit_every must be at least 1"));
        }
        if self.n_init < 2 || self.init_query_size < 2 || self.init_query_size > self.n_init {
            return Err(Error::param("need n_init ≥ init_query_size ≥ 2"));
        }
        self.fit.validate()?;
        self.acquisition.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Init,
    Bo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    /// Sequence number; a choice must name the query it answers.
    pub seq: u64,
    pub kind: QueryKind,
    pub ids: Vec<usize>,
    /// Fewer options than the nominal query size were available.
    pub short: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub log_hv_diff: Option<f64>,
    pub n_pareto: usize,
    pub acquisition_max: Option<f64>,
    pub fallback: bool,
    pub wall_time_s: f64,
}

/// Choice-based BO session: option table, choice history, pending query
/// and the state machine
/// `initializing → (fitting ⇄ awaiting-choice / ready) → done`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoSession {
    pub id: String,
    pub config: SessionConfig,
    pub options: Vec<OptionPoint>,
    pub data: Vec<ChoiceObservation>,
    pub state: SessionState,
    pub pending_query: Option<PendingQuery>,
    pub query_seq: u64,
    pub init_queries_done: usize,
    /// BO choices incorporated so far.
    pub iteration: usize,
    pub resolved_n_e: Option<usize>,
    pub history: Vec<IterationRecord>,
    pub pareto: Option<ParetoEstimate>,
    pub vi_state: Option<VariationalState>,
    pub fits: usize,
    pub created_at: String,
    pub updated_at: String,
    #[serde(skip)]
    posterior: Option<SurrogatePosterior>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn event_rng(seed: u64, tag: u64, k: u64) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(tag.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(k);
    ChaCha8Rng::seed_from_u64(mixed)
}

impl BoSession {
    /// Samples the initial options uniformly in the bounds and issues the
    /// first initialisation query.
    pub fn new(id: impl Into<String>, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = event_rng(config.seed, 1, 0);
        let options = (0..config.n_init)
            .map(|i| {
                let x = config.bounds.iter().map(|b| rng.random_range(b[0]..b[1])).collect();
                OptionPoint::new(i, x)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_options(id, config, options)
    }

    /// As [`BoSession::new`] with caller-supplied initial options.
    pub fn with_options(id: impl Into<String>, config: SessionConfig, options: Vec<OptionPoint>) -> Result<Self> {
        config.validate()?;
        for (i, o) in options.iter().enumerate() {
            if o.id != i || o.dim() != config.bounds.len() {
                return Err(Error::param("initial options must have ids 0..n and match the bounds"));
            }
        }
        let t = now();
        let mut s = Self {
            id: id.into(),
            config,
            options,
            data: Vec::new(),
            state: SessionState::Initializing,
            pending_query: None,
            query_seq: 0,
            init_queries_done: 0,
            iteration: 0,
            resolved_n_e: None,
            history: Vec::new(),
            pareto: None,
            vi_state: None,
            fits: 0,
            created_at: t.clone(),
            updated_at: t,
            posterior: None,
        };
        s.issue_init_query()?;
        Ok(s)
    }

    pub fn posterior(&self) -> Option<&SurrogatePosterior> {
        self.posterior.as_ref()
    }

    /// Restores a posterior snapshot after deserialisation.
    pub fn set_posterior(&mut self, post: Option<SurrogatePosterior>) {
        self.posterior = post;
    }

    pub fn pending_options(&self) -> Option<Vec<OptionPoint>> {
        self.pending_query
            .as_ref()
            .map(|q| q.ids.iter().map(|&i| self.options[i].clone()).collect())
    }

    fn touch(&mut self) {
        self.updated_at = now();
    }

    fn issue_init_query(&mut self) -> Result<()> {
        let k = self.config.init_query_size.min(self.config.n_init);
        let mut rng = event_rng(self.config.seed, 2, self.init_queries_done as u64);
        let mut ids = sample(&mut rng, self.config.n_init, k).into_vec();
        ids.sort_unstable();
        self.set_pending(QueryKind::Init, ids, false);
        Ok(())
    }

    fn set_pending(&mut self, kind: QueryKind, ids: Vec<usize>, short: bool) {
        self.query_seq += 1;
        self.pending_query = Some(PendingQuery { seq: self.query_seq, kind, ids, short });
        self.state = SessionState::AwaitingChoice;
        self.touch();
    }

    /// Records the answer to the pending query and moves to `Fitting`.
    pub fn submit_choice(&mut self, seq: u64, chosen: &[usize]) -> Result<()> {
        let q = match (&self.state, &self.pending_query) {
            (SessionState::AwaitingChoice, Some(q)) => q.clone(),
            _ => return Err(Error::InvalidChoice("no pending query".into())),
        };
        if seq != q.seq {
            return Err(Error::InvalidChoice(format!("choice answers query {seq}, pending query is {}", q.seq)));
        }
        if chosen.is_empty() {
            return Err(Error::InvalidChoice("empty selection".into()));
        }
        if let Some(bad) = chosen.iter().find(|c| !q.ids.contains(c)) {
            return Err(Error::InvalidChoice(format!("option {bad} is not in the pending query")));
        }
        let obs = ChoiceObservation::new(q.ids.clone(), chosen.to_vec())
            .map_err(|e| Error::InvalidChoice(e.to_string()))?;
        self.data.push(obs);
        match q.kind {
            QueryKind::Init => self.init_queries_done += 1,
            QueryKind::Bo => self.iteration += 1,
        }
        self.pending_query = None;
        self.state = SessionState::Fitting;
        self.touch();
        Ok(())
    }

    fn budget_left(&self) -> bool {
        self.config.max_iterations.is_none_or(|m| self.iteration < m)
    }

    /// Runs the work of the `Fitting` state: either the next initialisation
    /// query, or a refit followed by a new BO query (or `Done` once the
    /// budget is spent).
    pub fn advance(&mut self, metric: Option<&dyn Fn(&[OptionPoint]) -> Result<f64>>) -> Result<()> {
        if self.state != SessionState::Fitting {
            return Ok(());
        }
        if self.init_queries_done < self.config.n_init_queries {
            return self.issue_init_query();
        }
        let start = Instant::now();
        self.refit()?;
        self.state = SessionState::Ready;
        let post = self.posterior.as_ref().expect("refit sets the posterior");
        let observed: Vec<usize> = (0..self.options.len()).collect();
        let pareto = estimate_pareto_set(post, &observed, self.config.acquisition.pareto_threshold)?;
        let mut record = IterationRecord {
            iteration: self.iteration,
            log_hv_diff: metric.map(|f| f(&self.options)).transpose()?,
            n_pareto: pareto.indices.len(),
            acquisition_max: None,
            fallback: false,
            wall_time_s: 0.0,
        };
        if self.budget_left() {
            let seed = event_rng(self.config.seed, 3, self.iteration as u64).random::<u64>();
            let out = optimize_acquisition(post, &pareto, &self.config.bounds, &self.config.acquisition, seed)?;
            let x_new = OptionPoint::new(self.options.len(), out.x.clone())?;
            let plan = build_query(&x_new, post, &pareto, self.config.acquisition.query_size, seed)?;
            record.acquisition_max = Some(out.value);
            record.fallback = out.fallback;
            self.options.push(x_new);
            self.pareto = Some(pareto);
            self.set_pending(QueryKind::Bo, plan.ids, plan.short);
        } else {
            self.pareto = Some(pareto);
            self.state = SessionState::Done;
            self.touch();
        }
        record.wall_time_s = start.elapsed().as_secs_f64();
        self.history.push(record);
        Ok(())
    }

    fn refit(&mut self) -> Result<()> {
        let mut fit_cfg = self.config.fit.clone();
        fit_cfg.seed = event_rng(self.config.seed, 4, self.fits as u64).random::<u64>();
        let n_e = match (self.resolved_n_e, self.config.n_e) {
            (Some(n), _) => n,
            (None, LatentDimSpec::Fixed(n)) => n,
            (None, LatentDimSpec::Auto) => {
                select_latent_dimension(&self.data, &self.options, self.config.ne_max, &fit_cfg)?.selected
            }
        };
        self.resolved_n_e = Some(n_e);
        let refresh = self.vi_state.is_none() || self.iteration % self.config.refit_every == 0;
        if refresh {
            let warm = self.vi_state.as_ref().filter(|v| v.n_e == n_e);
            let mut cfg = fit_cfg.clone();
            if let (Some(_), Some(steps)) = (warm, self.config.vi_refit_steps) {
                cfg.vi_steps = steps;
            }
            let fit = fit_hyperparameters_from(&self.data, &self.options, n_e, &cfg, warm)?;
            self.vi_state = Some(fit.state);
        }
        let vi = self.vi_state.as_ref().expect("set above");
        let vi = vi.extended(self.options.len())?;
        let params = vi.hyper_means()?;
        let init = match &self.posterior {
            Some(p) if !refresh && p.n_e() == n_e => {
                let last = p.samples().last().and_then(|s| s.whitened()).cloned();
                last.map(|u| extend_rows(&u, self.options.len()))
            }
            _ => None,
        }
        .unwrap_or_else(|| vi.sample_latent_init(fit_cfg.seed ^ 0x5eed));
        let post = sample_posterior_from(&self.data, &self.options, params, &fit_cfg, Some(init))?;
        self.posterior = Some(post);
        self.fits += 1;
        Ok(())
    }
}

fn extend_rows(u: &DMatrix<f64>, rows: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, u.ncols());
    let keep = u.nrows().min(rows);
    out.rows_mut(0, keep).copy_from(&u.rows(0, keep));
    out
}

/// Source of answers to pending queries.
pub trait AnswerChannel {
    /// The chosen ids, or `None` when no answer is available yet.
    fn answer(&mut self, query: &[OptionPoint]) -> Result<Option<Vec<usize>>>;
}

/// Simulated agent choosing the non-dominated subset of noisy `g` values.
pub struct OracleChannel<F> {
    g: F,
    noise_sd: f64,
    rng: ChaCha8Rng,
}

impl<F: Fn(&[f64]) -> Vec<f64>> OracleChannel<F> {
    pub fn new(g: F, noise_sd: f64, seed: u64) -> Self {
        Self { g, noise_sd, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> AnswerChannel for OracleChannel<F> {
    fn answer(&mut self, query: &[OptionPoint]) -> Result<Option<Vec<usize>>> {
        let obs = simulate_choice(query, &self.g, self.noise_sd, &mut self.rng)?;
        Ok(Some(obs.chosen().to_vec()))
    }
}

/// Answer supplied by a person; empty until one is set.
#[derive(Debug, Default)]
pub struct HumanChannel {
    pub pending: Option<Vec<usize>>,
}

impl AnswerChannel for HumanChannel {
    fn answer(&mut self, _query: &[OptionPoint]) -> Result<Option<Vec<usize>>> {
        Ok(self.pending.take())
    }
}

/// One loop iteration: obtains an answer for the pending query, appends it
/// and refits, leaving the next query pending. Without an answer the
/// session stays in `AwaitingChoice`.
pub fn bo_step(
    session: &mut BoSession,
    channel: &mut dyn AnswerChannel,
    metric: Option<&dyn Fn(&[OptionPoint]) -> Result<f64>>,
) -> Result<()> {
    match session.state {
        SessionState::AwaitingChoice => {
            let query = session.pending_options().expect("pending query in awaiting state");
            let Some(chosen) = channel.answer(&query)? else {
                return Ok(());
            };
            let seq = session.pending_query.as_ref().expect("pending").seq;
            session.submit_choice(seq, &chosen)?;
            session.advance(metric)
        }
        SessionState::Fitting => session.advance(metric),
        SessionState::Initializing => session.issue_init_query(),
        SessionState::Ready | SessionState::Done => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> SessionConfig {
        SessionConfig {
            bounds: vec![[0.0, 1.0], [0.0, 1.0]],
            n_init: 8,
            n_init_queries: 3,
            max_iterations: Some(2),
            refit_every: 2,
            fit: FitConfig { vi_steps: 60, ess_burnin: 30, ess_samples: 40, ess_thin: 1, ..FitConfig::default() },
            acquisition: AcquisitionConfig { n_sobol: 32, refine_steps: 3, max_draws: 20, ..AcquisitionConfig::default() },
            seed: 4,
            ..SessionConfig::default()
        }
    }

    fn g(x: &[f64]) -> Vec<f64> {
        vec![x[0] - x[1] * x[1], x[1] - x[0] * x[0]]
    }

    #[test]
    fn benchmark_loop_runs_to_done() {
        let mut s = BoSession::new("t", quick_config()).unwrap();
        assert_eq!(s.state, SessionState::AwaitingChoice);
        let mut oracle = OracleChannel::new(g, 0.0, 1);
        let mut steps = 0;
        while s.state != SessionState::Done {
            let before = s.data.len();
            bo_step(&mut s, &mut oracle, None).unwrap();
            assert_eq!(s.data.len(), before + 1);
            steps += 1;
            assert!(steps < 20);
        }
        assert_eq!(steps, 3 + 2);
        assert_eq!(s.history.len(), 3);
        assert_eq!(s.options.len(), 8 + 2);
        assert!(s.posterior().is_some());
        // noise-free answers are exactly the true Pareto subsets
        for obs in &s.data {
            let rows: Vec<Vec<f64>> = obs.set().iter().map(|&i| g(&s.options[i].coords)).collect();
            let m = crate::domain::ObjectiveMatrix::from_rows(&rows).unwrap();
            let front: Vec<usize> =
                crate::domain::non_dominated_set(&m).unwrap().into_iter().map(|k| obs.set()[k]).collect();
            assert_eq!(obs.canonical_chosen(), { let mut f = front; f.sort(); f });
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let run = || {
            let mut s = BoSession::new("t", quick_config()).unwrap();
            let mut oracle = OracleChannel::new(g, 0.05, 9);
            for _ in 0..4 {
                bo_step(&mut s, &mut oracle, None).unwrap();
            }
            (s.options, s.data)
        };
        let (a, b) = (run(), run());
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn human_channel_waits() {
        let mut s = BoSession::new("h", quick_config()).unwrap();
        let mut human = HumanChannel::default();
        bo_step(&mut s, &mut human, None).unwrap();
        assert_eq!(s.state, SessionState::AwaitingChoice);
        assert!(s.data.is_empty());
        let first = s.pending_query.clone().unwrap();
        human.pending = Some(vec![first.ids[0]]);
        bo_step(&mut s, &mut human, None).unwrap();
        assert_eq!(s.data.len(), 1);
        assert_eq!(s.state, SessionState::AwaitingChoice);
        assert_eq!(s.pending_query.as_ref().unwrap().seq, first.seq + 1);
    }

    #[test]
    fn choice_validation() {
        let mut s = BoSession::new("v", quick_config()).unwrap();
        let q = s.pending_query.clone().unwrap();
        assert!(s.submit_choice(q.seq, &[]).is_err());
        assert!(s.submit_choice(q.seq + 1, &[q.ids[0]]).is_err());
        assert!(s.submit_choice(q.seq, &[999]).is_err());
        s.submit_choice(q.seq, &q.ids).unwrap();
        assert!(s.submit_choice(q.seq, &q.ids).is_err());
        assert_eq!(s.state, SessionState::Fitting);
    }

    #[test]
    fn session_json_round_trip() {
        let s = BoSession::new("j", quick_config()).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: BoSession = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["state"], "awaiting-choice");
        assert_eq!(v["config"]["n_e"], 2);
        let auto: LatentDimSpec = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(auto, LatentDimSpec::Auto);
    }
}
