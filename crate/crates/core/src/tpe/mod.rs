//! Mixed-type Tree-structured Parzen Estimator with an ask/tell interface.
//!
//! Observed trials are split into a "good" set (the top `ceil(gamma * n)` by
//! objective) and a "bad" set. Each parameter gets an independent density per
//! set: truncated Gaussian mixtures for floats and integers, smoothed
//! frequencies for categoricals. Candidates are drawn from the good densities
//! and the one maximising `sum(log l(x) - log g(x))` is suggested.
//!
//! Objectives are maximised.

mod estimator;

pub use estimator::{normal_cdf, scott_bandwidth, CategoricalEstimator, NumericKde};

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search_space::{ConfigError, Configuration, ParamKind, ParamValue, SearchSpace, Trial};

#[derive(Debug, Error, PartialEq)]
pub enum TpeError {
    #[error("search space has no parameters")]
    EmptySpace,
    #[error("invalid optimizer settings: {0}")]
    InvalidSettings(&'static str),
    #[error("trial {id} has an invalid configuration: {source}")]
    InvalidConfig {
        id: u64,
        #[source]
        source: ConfigError,
    },
    #[error("trial {0} has a non-finite objective")]
    NonFiniteObjective(u64),
    #[error("trial id {id} does not follow {last}")]
    NonIncreasingId { id: u64, last: u64 },
    #[error("no trials observed yet")]
    NoTrials,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpeSettings {
    /// Trials drawn uniformly before the surrogate takes over.
    pub n_startup: usize,
    /// Fraction of trials that form the good set.
    pub gamma: f64,
    pub n_candidates: usize,
    pub seed: u64,
    /// Lower bound on kernel bandwidth as a fraction of the parameter range.
    pub bandwidth_floor_fraction: f64,
    /// Pseudo-count added to every category.
    pub categorical_prior_weight: f64,
    /// Weight of the wide prior kernel in every numeric density.
    #[serde(default = "default_numeric_prior_weight")]
    pub numeric_prior_weight: f64,
}

fn default_numeric_prior_weight() -> f64 {
    1.0
}

impl Default for TpeSettings {
    fn default() -> Self {
        Self {
            n_startup: 10,
            gamma: 0.25,
            n_candidates: 24,
            seed: 0,
            bandwidth_floor_fraction: 0.01,
            categorical_prior_weight: 1.0,
            numeric_prior_weight: default_numeric_prior_weight(),
        }
    }
}

impl TpeSettings {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TpeError> {
        if self.n_startup < 1 {
            return Err(TpeError::InvalidSettings("n_startup must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(TpeError::InvalidSettings("gamma must lie in (0, 1)"));
        }
        if self.n_candidates < 1 {
            return Err(TpeError::InvalidSettings("n_candidates must be at least 1"));
        }
        if !(self.bandwidth_floor_fraction > 0.0) {
            return Err(TpeError::InvalidSettings("bandwidth floor must be positive"));
        }
        if !(self.categorical_prior_weight >= 0.0) {
            return Err(TpeError::InvalidSettings("categorical prior must be non-negative"));
        }
        if !(self.numeric_prior_weight >= 0.0) {
            return Err(TpeError::InvalidSettings("numeric prior must be non-negative"));
        }
        Ok(())
    }
}

/// Optimizer state: search space, settings and the observed history.
///
/// Each `suggest` call draws from its own ChaCha stream, indexed by the number
/// of suggestions made so far, so the state can be rebuilt from a trial log.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    space: SearchSpace,
    settings: TpeSettings,
    history: Vec<Trial>,
    suggestions: u64,
}

impl OptimizerState {
    pub fn new(space: SearchSpace, settings: TpeSettings) -> Result<Self, TpeError> {
        settings.validate()?;
        if space.is_empty() {
            return Err(TpeError::EmptySpace);
        }
        Ok(Self {
            space,
            settings,
            history: Vec::new(),
            suggestions: 0,
        })
    }

    /// Rebuilds a state from a replayed trial log, assuming one suggestion per trial.
    pub fn from_trials(
        space: SearchSpace,
        settings: TpeSettings,
        trials: impl IntoIterator<Item = Trial>,
    ) -> Result<Self, TpeError> {
        let mut state = Self::new(space, settings)?;
        for t in trials {
            state.observe(t)?;
        }
        state.suggestions = state.history.len() as u64;
        Ok(state)
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn settings(&self) -> &TpeSettings {
        &self.settings
    }

    pub fn history(&self) -> &[Trial] {
        &self.history
    }

    pub fn into_history(self) -> Vec<Trial> {
        self.history
    }

    /// Id to give the next trial (ids start at 1).
    pub fn next_id(&self) -> u64 {
        self.history.last().map_or(1, |t| t.id + 1)
    }

    /// Size of the good set for `n` observations.
    pub fn good_set_size(&self, n: usize) -> usize {
        ((self.settings.gamma * n as f64).ceil() as usize).clamp(1, n.max(1))
    }

    pub fn suggest(&mut self) -> Result<Configuration, TpeError> {
        if self.space.is_empty() {
            return Err(TpeError::EmptySpace);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.settings.seed);
        rng.set_stream(self.suggestions);
        self.suggestions += 1;

        if self.history.len() < self.settings.n_startup {
            return Ok(self.space.sample_uniform(&mut rng));
        }
        Ok(self.suggest_tpe(&mut rng))
    }

    fn suggest_tpe(&self, rng: &mut ChaCha8Rng) -> Configuration {
        let mut ranked: Vec<&Trial> = self.history.iter().collect();
        ranked.sort_by(|a, b| rank_order(a, b));
        let n_good = self.good_set_size(ranked.len());
        let (good, bad) = ranked.split_at(n_good);

        let models: Vec<ParamModel> = self
            .space
            .params()
            .iter()
            .map(|spec| {
                let pick = |set: &[&Trial]| -> Vec<ParamValue> {
                    set.iter()
                        .filter_map(|t| t.config.get(&spec.name))
                        .collect()
                };
                ParamModel::fit(&spec.kind, &pick(good), &pick(bad), &self.settings)
            })
            .collect();

        let mut best: Option<(f64, Configuration)> = None;
        for _ in 0..self.settings.n_candidates {
            let mut cfg = Configuration::new();
            let mut score = 0.0;
            for (spec, model) in self.space.params().iter().zip(&models) {
                let (value, s) = model.draw(rng);
                score += s;
                cfg.set(spec.name.clone(), value);
            }
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, cfg));
            }
        }
        best.expect("n_candidates >= 1").1
    }

    pub fn observe(&mut self, trial: Trial) -> Result<(), TpeError> {
        trial
            .config
            .validate(&self.space)
            .map_err(|source| TpeError::InvalidConfig {
                id: trial.id,
                source,
            })?;
        if !trial.objective.is_finite() {
            return Err(TpeError::NonFiniteObjective(trial.id));
        }
        if let Some(last) = self.history.last() {
            if trial.id <= last.id {
                return Err(TpeError::NonIncreasingId {
                    id: trial.id,
                    last: last.id,
                });
            }
        }
        self.history.push(trial);
        Ok(())
    }

    /// Highest objective, earliest id on ties.
    pub fn best(&self) -> Result<&Trial, TpeError> {
        best_trial(&self.history).ok_or(TpeError::NoTrials)
    }
}

/// Descending objective, ascending id.
fn rank_order(a: &Trial, b: &Trial) -> Ordering {
    b.objective
        .partial_cmp(&a.objective)
        .unwrap_or(Ordering::Equal)
        .then(a.id.cmp(&b.id))
}

pub fn best_trial(trials: &[Trial]) -> Option<&Trial> {
    trials.iter().min_by(|a, b| rank_order(a, b))
}

/// Best objective seen after each trial.
pub fn best_so_far(trials: &[Trial]) -> Vec<f64> {
    trials
        .iter()
        .scan(f64::NEG_INFINITY, |best, t| {
            *best = best.max(t.objective);
            Some(*best)
        })
        .collect()
}

enum ParamModel {
    Numeric {
        good: NumericKde,
        bad: NumericKde,
        integer: bool,
    },
    Categorical {
        good: CategoricalEstimator,
        bad: CategoricalEstimator,
    },
}

impl ParamModel {
    fn fit(kind: &ParamKind, good: &[ParamValue], bad: &[ParamValue], s: &TpeSettings) -> Self {
        match kind {
            ParamKind::Float { lo, hi } => {
                let f = |vs: &[ParamValue]| {
                    let xs: Vec<f64> = vs.iter().map(|v| v.as_f64()).collect();
                    NumericKde::fit(&xs, *lo, *hi, false, s.bandwidth_floor_fraction, s.numeric_prior_weight)
                };
                ParamModel::Numeric {
                    good: f(good),
                    bad: f(bad),
                    integer: false,
                }
            }
            ParamKind::Integer { lo, hi } => {
                let f = |vs: &[ParamValue]| {
                    let xs: Vec<f64> = vs.iter().map(|v| v.as_f64()).collect();
                    NumericKde::fit(&xs, *lo as f64, *hi as f64, true, s.bandwidth_floor_fraction, s.numeric_prior_weight)
                };
                ParamModel::Numeric {
                    good: f(good),
                    bad: f(bad),
                    integer: true,
                }
            }
            ParamKind::Categorical { choices } => {
                let f = |vs: &[ParamValue]| {
                    let idx: Vec<usize> = vs.iter().map(|v| v.as_f64() as usize).collect();
                    CategoricalEstimator::fit(&idx, choices.len(), s.categorical_prior_weight)
                };
                ParamModel::Categorical {
                    good: f(good),
                    bad: f(bad),
                }
            }
        }
    }

    /// Draws from the good density; returns the value and its `log l - log g`.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (ParamValue, f64) {
        match self {
            ParamModel::Numeric { good, bad, integer } => {
                let x = good.sample(rng);
                let score = good.log_pdf(x) - bad.log_pdf(x);
                let value = if *integer {
                    ParamValue::Int(x as i64)
                } else {
                    ParamValue::Float(x)
                };
                (value, score)
            }
            ParamModel::Categorical { good, bad } => {
                let c = good.sample(rng);
                (ParamValue::Int(c as i64), good.log_pdf(c) - bad.log_pdf(c))
            }
        }
    }
}

/// Runs a plain sequential ask/tell loop for `n_trials` trials.
pub fn optimize(
    space: SearchSpace,
    settings: TpeSettings,
    n_trials: usize,
    mut objective: impl FnMut(&Configuration) -> f64,
) -> Result<OptimizerState, TpeError> {
    let mut state = OptimizerState::new(space, settings)?;
    for _ in 0..n_trials {
        let cfg = state.suggest()?;
        let value = objective(&cfg);
        let id = state.next_id();
        state.observe(Trial::new(id, cfg, vec![value], 0.0))?;
    }
    Ok(state)
}
