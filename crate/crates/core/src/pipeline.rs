//! Per-sample segmentation under a configuration, test-time adaptation of
//! that configuration on an unlabelled subset, and full-set inference.

use std::time::Instant;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, Backends};
use crate::image_ops::{apply_transform_chain, TransformParams};
use crate::prompt_boost::{boost, DEFAULT_BOOST_SEED};
use crate::search_space::{
    default_space, ConfigError, Configuration, SearchSpace, Trial, BOOST_POINTS, GROUNDING_PREFIX, PROMPT_ID,
    SEGMENTATION_PREFIX,
};
use crate::task::TaskDefinition;
use crate::tpe::{OptimizerState, TpeError, TpeSettings};
use crate::types::{BBox, BinaryMask, ImageRgb8, Point2D};
use crate::validator::{validate, ValidationError, ValidationScore};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("grounding sentence index {index} out of range for {available} sentences")]
    PromptIndex { index: i64, available: usize },
    #[error("optimizer: {0}")]
    Optimizer(#[from] TpeError),
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("no samples to adapt on")]
    NoSamples,
    #[error("every evaluation failed with a backend error; last: {0}")]
    AllBackendErrors(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// An unlabelled test image.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: ImageRgb8,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: ImageRgb8) -> Self {
        Self { id: id.into(), image }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptMode {
    /// One configuration for the whole subset.
    Batch,
    /// An independent search per subset image.
    PerSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationSettings {
    pub n_trials: usize,
    pub subset_size: usize,
    pub subset_seed: u64,
    pub mode: AdaptMode,
    pub workers: usize,
    pub optimizer: TpeSettings,
}

impl Default for AdaptationSettings {
    fn default() -> Self {
        Self {
            n_trials: 100,
            subset_size: 100,
            subset_seed: 0,
            mode: AdaptMode::Batch,
            workers: 1,
            optimizer: TpeSettings::default(),
        }
    }
}

impl AdaptationSettings {
    /// Seeds both subset selection and the optimizer.
    pub fn seeded(seed: u64) -> Self {
        Self {
            subset_seed: seed,
            optimizer: TpeSettings::with_seed(seed),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_trials < 1 {
            return Err(PipelineError::Settings("n_trials must be at least 1".into()));
        }
        if self.subset_size < 1 {
            return Err(PipelineError::Settings("subset_size must be at least 1".into()));
        }
        if self.workers < 1 {
            return Err(PipelineError::Settings("workers must be at least 1".into()));
        }
        self.optimizer.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Ok,
    GroundingFailed,
    BackendError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub sample_id: String,
    /// Present exactly when `status` is `Ok`.
    pub mask: Option<BinaryMask>,
    pub bbox: Option<BBox>,
    pub points: Vec<Point2D>,
    pub score: ValidationScore,
    pub status: SampleStatus,
    pub error: Option<String>,
}

impl SampleResult {
    fn failed(sample_id: &str, status: SampleStatus, bbox: Option<BBox>, points: Vec<Point2D>, error: String) -> Self {
        Self {
            sample_id: sample_id.to_owned(),
            mask: None,
            bbox,
            points,
            score: ValidationScore::floor(),
            status,
            error: Some(error),
        }
    }
}

/// Everything `segment_one` needs from a configuration, checked once.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub grounding: TransformParams,
    pub segmentation: TransformParams,
    pub prompt_index: usize,
    pub boost_points: usize,
}

impl ResolvedConfig {
    pub fn new(config: &Configuration, task: &TaskDefinition) -> Result<Self, PipelineError> {
        let space = default_space(task.grounding_sentences().len());
        config.validate(&space)?;
        let index = config.get_i64(PROMPT_ID).ok_or_else(|| ConfigError::Missing(PROMPT_ID.into()))?;
        let available = task.grounding_sentences().len();
        if index < 0 || index as usize >= available {
            return Err(PipelineError::PromptIndex { index, available });
        }
        let k = config.get_i64(BOOST_POINTS).ok_or_else(|| ConfigError::Missing(BOOST_POINTS.into()))?;
        Ok(Self {
            grounding: TransformParams::from_config(config, GROUNDING_PREFIX)?,
            segmentation: TransformParams::from_config(config, SEGMENTATION_PREFIX)?,
            prompt_index: index as usize,
            boost_points: k.max(0) as usize,
        })
    }
}

/// Runs grounding, prompt boosting, segmentation and validation for one image.
pub fn segment_one(
    sample_id: &str,
    image: &ImageRgb8,
    task: &TaskDefinition,
    config: &Configuration,
    backends: &Backends,
) -> Result<SampleResult, PipelineError> {
    let resolved = ResolvedConfig::new(config, task)?;
    Ok(segment_resolved(sample_id, image, task, &resolved, backends))
}

fn segment_resolved(
    sample_id: &str,
    image: &ImageRgb8,
    task: &TaskDefinition,
    cfg: &ResolvedConfig,
    backends: &Backends,
) -> SampleResult {
    let grounding_input = apply_transform_chain(image, &cfg.grounding);
    let sentence = &task.grounding_sentences()[cfg.prompt_index];
    let bbox = match backends.grounding.ground(&grounding_input, sentence) {
        Ok(b) => b,
        Err(BackendError::NoDetection) => {
            return SampleResult::failed(
                sample_id,
                SampleStatus::GroundingFailed,
                None,
                Vec::new(),
                BackendError::NoDetection.to_string(),
            )
        }
        Err(e) => return SampleResult::failed(sample_id, SampleStatus::BackendError, None, Vec::new(), e.to_string()),
    };
    let points = match boost(
        &grounding_input,
        bbox,
        cfg.boost_points,
        backends.features.as_ref(),
        DEFAULT_BOOST_SEED,
    ) {
        Ok(p) => p,
        Err(e) => {
            return SampleResult::failed(sample_id, SampleStatus::BackendError, Some(bbox), Vec::new(), e.to_string())
        }
    };
    let segmentation_input = apply_transform_chain(image, &cfg.segmentation);
    let mask = match backends.segmentation.segment(&segmentation_input, bbox, &points) {
        Ok(m) => m,
        Err(e) => return SampleResult::failed(sample_id, SampleStatus::BackendError, Some(bbox), points, e.to_string()),
    };
    let score = match validate(image, &mask, task, backends.scoring.as_ref()) {
        Ok(s) => s,
        Err(e @ (ValidationError::Shape(_) | ValidationError::Backend(_))) => {
            return SampleResult::failed(sample_id, SampleStatus::BackendError, Some(bbox), points, e.to_string())
        }
    };
    SampleResult {
        sample_id: sample_id.to_owned(),
        mask: Some(mask),
        bbox: Some(bbox),
        points,
        score,
        status: SampleStatus::Ok,
        error: None,
    }
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))
}

fn evaluate_all(
    pool: &rayon::ThreadPool,
    samples: &[&Sample],
    task: &TaskDefinition,
    cfg: &ResolvedConfig,
    backends: &Backends,
) -> Vec<SampleResult> {
    pool.install(|| {
        samples
            .par_iter()
            .map(|s| segment_resolved(&s.id, &s.image, task, cfg, backends))
            .collect()
    })
}

/// Segments every sample under `config`; order is preserved and per-sample
/// failures are reported through `status`.
pub fn run_dataset(
    samples: &[Sample],
    task: &TaskDefinition,
    config: &Configuration,
    backends: &Backends,
    workers: usize,
) -> Result<Vec<SampleResult>, PipelineError> {
    let cfg = ResolvedConfig::new(config, task)?;
    let pool = build_pool(workers)?;
    let refs: Vec<&Sample> = samples.iter().collect();
    Ok(evaluate_all(&pool, &refs, task, &cfg, backends))
}

/// Indices of a seeded subset of `min(size, n)` samples drawn without
/// replacement, in ascending order.
pub fn select_subset(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, size.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleAdaptation {
    pub sample_id: String,
    pub best: Configuration,
    pub trials: Vec<Trial>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Adaptation {
    Batch {
        subset: Vec<String>,
        best: Configuration,
        trials: Vec<Trial>,
    },
    PerSample {
        runs: Vec<SampleAdaptation>,
    },
}

impl Adaptation {
    pub fn subset_ids(&self) -> Vec<String> {
        match self {
            Adaptation::Batch { subset, .. } => subset.clone(),
            Adaptation::PerSample { runs } => runs.iter().map(|r| r.sample_id.clone()).collect(),
        }
    }
}

struct SearchOutcome {
    best: Configuration,
    trials: Vec<Trial>,
    all_backend_errors: bool,
    last_error: Option<String>,
}

fn search(
    space: &SearchSpace,
    settings: &AdaptationSettings,
    pool: &rayon::ThreadPool,
    samples: &[&Sample],
    task: &TaskDefinition,
    backends: &Backends,
) -> Result<SearchOutcome, PipelineError> {
    let mut state = OptimizerState::new(space.clone(), settings.optimizer.clone())?;
    let mut all_backend_errors = true;
    let mut last_error = None;
    for _ in 0..settings.n_trials {
        let config = state.suggest()?;
        let started = Instant::now();
        let cfg = ResolvedConfig::new(&config, task)?;
        let results = evaluate_all(pool, samples, task, &cfg, backends);
        for r in &results {
            if r.status == SampleStatus::BackendError {
                last_error.clone_from(&r.error);
            } else {
                all_backend_errors = false;
            }
        }
        let scores: Vec<f64> = results.iter().map(|r| r.score.s_val).collect();
        let trial = Trial::new(state.next_id(), config, scores, started.elapsed().as_secs_f64());
        debug!("trial {} objective {:.4}", trial.id, trial.objective);
        state.observe(trial)?;
    }
    let best = state.best()?.config.clone();
    Ok(SearchOutcome {
        best,
        trials: state.into_history(),
        all_backend_errors,
        last_error,
    })
}

/// Searches for the configuration maximising the mean proxy score over a
/// seeded subset of `samples`.
pub fn adapt(
    samples: &[Sample],
    task: &TaskDefinition,
    settings: &AdaptationSettings,
    backends: &Backends,
) -> Result<Adaptation, PipelineError> {
    settings.validate()?;
    if samples.is_empty() {
        return Err(PipelineError::NoSamples);
    }
    let space = default_space(task.grounding_sentences().len());
    let subset: Vec<&Sample> = select_subset(samples.len(), settings.subset_size, settings.subset_seed)
        .into_iter()
        .map(|i| &samples[i])
        .collect();
    let pool = build_pool(settings.workers)?;
    info!(
        "adapting on {} of {} samples, {} trials, {:?} mode",
        subset.len(),
        samples.len(),
        settings.n_trials,
        settings.mode
    );
    match settings.mode {
        AdaptMode::Batch => {
            let out = search(&space, settings, &pool, &subset, task, backends)?;
            if out.all_backend_errors {
                return Err(PipelineError::AllBackendErrors(out.last_error.unwrap_or_default()));
            }
            Ok(Adaptation::Batch {
                subset: subset.iter().map(|s| s.id.clone()).collect(),
                best: out.best,
                trials: out.trials,
            })
        }
        AdaptMode::PerSample => {
            // the searches are independent, so parallelise across samples
            let single = build_pool(1)?;
            let outcomes: Vec<Result<SearchOutcome, PipelineError>> = pool.install(|| {
                subset
                    .par_iter()
                    .map(|s| search(&space, settings, &single, std::slice::from_ref(s), task, backends))
                    .collect()
            });
            let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
            if outcomes.iter().all(|o| o.all_backend_errors) {
                let last = outcomes.iter().rev().find_map(|o| o.last_error.clone());
                return Err(PipelineError::AllBackendErrors(last.unwrap_or_default()));
            }
            Ok(Adaptation::PerSample {
                runs: subset
                    .iter()
                    .zip(outcomes)
                    .map(|(s, o)| SampleAdaptation {
                        sample_id: s.id.clone(),
                        best: o.best,
                        trials: o.trials,
                    })
                    .collect(),
            })
        }
    }
}
