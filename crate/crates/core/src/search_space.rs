//! Hyperparameter universe of the test-time adaptors, plus the configuration
//! and trial records the optimizer consumes.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prefix of the transform block applied to the grounding input.
pub const GROUNDING_PREFIX: &str = "grd_";
/// Prefix of the transform block applied to the segmentation input.
pub const SEGMENTATION_PREFIX: &str = "seg_";
pub const PROMPT_ID: &str = "grd_prompt_id";
pub const BOOST_POINTS: &str = "bst_k_points";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("parameter `{0}` is missing")]
    Missing(String),
    #[error("parameter `{0}` is not part of the search space")]
    Unknown(String),
    #[error("parameter `{name}` = {value} is out of bounds")]
    OutOfBounds { name: String, value: String },
    #[error("parameter `{name}` expects a {expected} value")]
    KindMismatch { name: String, expected: &'static str },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("invalid specification for `{0}`")]
    InvalidSpec(String),
    #[error("malformed configuration JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamKind {
    Float { lo: f64, hi: f64 },
    Integer { lo: i64, hi: i64 },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn float(name: impl Into<String>, lo: f64, hi: f64) -> Result<Self, ConfigError> {
        let name = name.into();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ConfigError::InvalidSpec(name));
        }
        Ok(Self {
            name,
            kind: ParamKind::Float { lo, hi },
        })
    }

    pub fn integer(name: impl Into<String>, lo: i64, hi: i64) -> Result<Self, ConfigError> {
        let name = name.into();
        if lo > hi {
            return Err(ConfigError::InvalidSpec(name));
        }
        Ok(Self {
            name,
            kind: ParamKind::Integer { lo, hi },
        })
    }

    pub fn categorical(name: impl Into<String>, choices: Vec<String>) -> Result<Self, ConfigError> {
        let name = name.into();
        if choices.is_empty() {
            return Err(ConfigError::InvalidSpec(name));
        }
        Ok(Self {
            name,
            kind: ParamKind::Categorical { choices },
        })
    }

    /// Checks that `value` has the right kind and lies within bounds.
    pub fn check(&self, value: ParamValue) -> Result<(), ConfigError> {
        let out_of_bounds = || ConfigError::OutOfBounds {
            name: self.name.clone(),
            value: value.to_string(),
        };
        match (&self.kind, value) {
            (ParamKind::Float { lo, hi }, ParamValue::Float(v)) => {
                if v.is_finite() && *lo <= v && v <= *hi {
                    Ok(())
                } else {
                    Err(out_of_bounds())
                }
            }
            (ParamKind::Integer { lo, hi }, ParamValue::Int(v)) => {
                if *lo <= v && v <= *hi {
                    Ok(())
                } else {
                    Err(out_of_bounds())
                }
            }
            (ParamKind::Categorical { choices }, ParamValue::Int(v)) => {
                if v >= 0 && (v as usize) < choices.len() {
                    Ok(())
                } else {
                    Err(out_of_bounds())
                }
            }
            (ParamKind::Float { .. }, _) => Err(self.mismatch("float")),
            (ParamKind::Integer { .. }, _) => Err(self.mismatch("integer")),
            (ParamKind::Categorical { .. }, _) => Err(self.mismatch("category index")),
        }
    }

    fn mismatch(&self, expected: &'static str) -> ConfigError {
        ConfigError::KindMismatch {
            name: self.name.clone(),
            expected,
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        match &self.kind {
            ParamKind::Float { lo, hi } => ParamValue::Float(rng.random_range(*lo..=*hi)),
            ParamKind::Integer { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
            ParamKind::Categorical { choices } => {
                ParamValue::Int(rng.random_range(0..choices.len()) as i64)
            }
        }
    }
}

/// A single parameter value. Categorical parameters store the choice index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
}

impl ParamValue {
    pub fn as_f64(self) -> f64 {
        match self {
            ParamValue::Int(v) => v as f64,
            ParamValue::Float(v) => v,
        }
    }
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self, ConfigError> {
        let mut seen = HashSet::new();
        for p in &params {
            if !seen.insert(p.name.as_str()) {
                return Err(ConfigError::DuplicateName(p.name.clone()));
            }
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Independent uniform draw of every parameter.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        Configuration {
            values: self
                .params
                .iter()
                .map(|p| (p.name.clone(), p.sample_uniform(rng)))
                .collect(),
        }
    }
}

/// The adaptor search space: one transform block for the grounding input, one
/// for the segmentation input, the grounding sentence index and the number of
/// boosted point prompts.
pub fn default_space(n_sentences: usize) -> SearchSpace {
    assert!(n_sentences >= 1, "a task needs at least one grounding sentence");
    let mut params = Vec::with_capacity(20);
    for prefix in [GROUNDING_PREFIX, SEGMENTATION_PREFIX] {
        params.extend(transform_block(prefix));
    }
    params.push(
        ParamSpec::categorical(PROMPT_ID, (0..n_sentences).map(|i| i.to_string()).collect())
            .expect("non-empty"),
    );
    params.push(ParamSpec::integer(BOOST_POINTS, 0, 5).expect("valid"));
    SearchSpace::new(params).expect("names are unique")
}

fn transform_block(prefix: &str) -> Vec<ParamSpec> {
    let int = |n: &str, lo, hi| ParamSpec::integer(format!("{prefix}{n}"), lo, hi).expect("valid");
    let float = |n: &str, lo, hi| ParamSpec::float(format!("{prefix}{n}"), lo, hi).expect("valid");
    vec![
        int("hsv_hue_shift", 0, 20),
        int("hsv_sat_shift", 0, 30),
        int("hsv_val_shift", 0, 30),
        int("r_shift", 0, 20),
        int("g_shift", 0, 20),
        int("b_shift", 0, 20),
        float("clahe_clip", 0.0, 4.0),
        int("clahe_grid", 1, 4),
        float("edge_strength", 0.0, 1.0),
    ]
}

/// Configuration that leaves images untouched and skips prompt boosting.
pub fn base_config(space: &SearchSpace) -> Configuration {
    let values = space
        .params
        .iter()
        .map(|p| {
            let v = match &p.kind {
                ParamKind::Float { lo, .. } => ParamValue::Float(*lo),
                ParamKind::Integer { lo, .. } => ParamValue::Int(*lo),
                ParamKind::Categorical { .. } => ParamValue::Int(0),
            };
            (p.name.clone(), v)
        })
        .collect();
    Configuration { values }
}

/// One value per search-space parameter, keyed by name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    values: BTreeMap<String, ParamValue>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: ParamValue) {
        self.values.insert(name.into(), value);
    }

    pub fn with(mut self, name: impl Into<String>, value: ParamValue) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<ParamValue> {
        self.values.get(name).copied()
    }

    pub fn get_f64(&self, name: &str) -> Option<f64> {
        self.get(name).map(ParamValue::as_f64)
    }

    pub fn get_i64(&self, name: &str) -> Option<i64> {
        match self.get(name)? {
            ParamValue::Int(v) => Some(v),
            ParamValue::Float(_) => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ParamValue)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self, space: &SearchSpace) -> Result<(), ConfigError> {
        for spec in space.params() {
            let value = self
                .values
                .get(&spec.name)
                .ok_or_else(|| ConfigError::Missing(spec.name.clone()))?;
            spec.check(*value)?;
        }
        if let Some(extra) = self.values.keys().find(|k| space.get(k).is_none()) {
            return Err(ConfigError::Unknown(extra.clone()));
        }
        Ok(())
    }

    /// Parses a flat JSON object and validates it. Integral literals given for
    /// float parameters are accepted.
    pub fn from_json(json: &str, space: &SearchSpace) -> Result<Self, ConfigError> {
        let mut config: Configuration =
            serde_json::from_str(json).map_err(|e| ConfigError::Json(e.to_string()))?;
        for (name, value) in config.values.iter_mut() {
            if let (Some(ParamKind::Float { .. }), ParamValue::Int(v)) =
                (space.get(name).map(|s| &s.kind), *value)
            {
                *value = ParamValue::Float(v as f64);
            }
        }
        config.validate(space)?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration is always serialisable")
    }
}

/// One evaluated configuration. `objective` is the mean of `per_sample_scores`.
///
/// `wall_time` is kept in memory only; trial logs must stay byte-identical
/// across reruns, so timings are written separately.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trial {
    pub id: u64,
    pub config: Configuration,
    pub objective: f64,
    pub per_sample_scores: Vec<f64>,
    #[serde(skip_serializing, default)]
    pub wall_time: f64,
}

// timing never takes part in equality
impl PartialEq for Trial {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.config == other.config
            && self.objective.to_bits() == other.objective.to_bits()
            && self.per_sample_scores == other.per_sample_scores
    }
}

impl Trial {
    pub fn new(id: u64, config: Configuration, per_sample_scores: Vec<f64>, wall_time: f64) -> Self {
        let objective = mean(&per_sample_scores);
        Self {
            id,
            config,
            objective,
            per_sample_scores,
            wall_time,
        }
    }
}

/// Arithmetic mean; NaN for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn write_trial_log(path: impl AsRef<Path>, trials: &[Trial]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in trials {
        serde_json::to_writer(&mut out, t).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_trial_log(path: impl AsRef<Path>) -> std::io::Result<Vec<Trial>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut trials = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        trials.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
    }
    Ok(trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_space_layout() {
        let space = default_space(10);
        assert_eq!(space.len(), 20);
        let numeric = space
            .params()
            .iter()
            .filter(|p| !matches!(p.kind, ParamKind::Categorical { .. }) && p.name != BOOST_POINTS)
            .count();
        assert_eq!(numeric, 18);
        match &space.get(PROMPT_ID).unwrap().kind {
            ParamKind::Categorical { choices } => assert_eq!(choices.len(), 10),
            k => panic!("unexpected {k:?}"),
        }
        assert_eq!(
            space.get(BOOST_POINTS).unwrap().kind,
            ParamKind::Integer { lo: 0, hi: 5 }
        );
        for prefix in [GROUNDING_PREFIX, SEGMENTATION_PREFIX] {
            assert_eq!(
                space.get(&format!("{prefix}clahe_clip")).unwrap().kind,
                ParamKind::Float { lo: 0.0, hi: 4.0 }
            );
            assert_eq!(
                space.get(&format!("{prefix}hsv_sat_shift")).unwrap().kind,
                ParamKind::Integer { lo: 0, hi: 30 }
            );
            assert_eq!(
                space.get(&format!("{prefix}clahe_grid")).unwrap().kind,
                ParamKind::Integer { lo: 1, hi: 4 }
            );
        }
    }

    #[test]
    fn single_sentence_space() {
        match &default_space(1).get(PROMPT_ID).unwrap().kind {
            ParamKind::Categorical { choices } => assert_eq!(choices.len(), 1),
            k => panic!("unexpected {k:?}"),
        }
    }

    #[test]
    fn base_config_values() {
        let space = default_space(10);
        let base = base_config(&space);
        base.validate(&space).unwrap();
        assert_eq!(base.get(BOOST_POINTS), Some(ParamValue::Int(0)));
        assert_eq!(base.get(PROMPT_ID), Some(ParamValue::Int(0)));
        assert_eq!(base.get("grd_clahe_grid"), Some(ParamValue::Int(1)));
        assert_eq!(base.get("seg_clahe_clip"), Some(ParamValue::Float(0.0)));
        assert_eq!(base.get("seg_edge_strength"), Some(ParamValue::Float(0.0)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let space = default_space(10);
        let a = space.sample_uniform(&mut ChaCha8Rng::seed_from_u64(3));
        let b = space.sample_uniform(&mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        a.validate(&space).unwrap();
    }

    #[test]
    fn integer_bounds_are_inclusive() {
        let spec = ParamSpec::integer("g", 1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = [false; 4];
        for _ in 0..1000 {
            match spec.sample_uniform(&mut rng) {
                ParamValue::Int(v) => {
                    assert!((1..=4).contains(&v));
                    seen[(v - 1) as usize] = true;
                }
                v => panic!("unexpected {v:?}"),
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn boost_points_frequencies_are_uniform() {
        let space = default_space(10);
        let spec = space.get(BOOST_POINTS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            if let ParamValue::Int(v) = spec.sample_uniform(&mut rng) {
                counts[v as usize] += 1;
            }
        }
        let expected = n as f64 / 6.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square 0.999 quantile with 5 degrees of freedom
        assert!(chi2 < 20.52, "chi2 = {chi2}, counts = {counts:?}");
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() <= 0.02);
        }
    }

    #[test]
    fn validation_names_the_offending_param() {
        let space = default_space(3);
        let cfg = base_config(&space).with("seg_r_shift", ParamValue::Int(21));
        assert_eq!(
            cfg.validate(&space),
            Err(ConfigError::OutOfBounds {
                name: "seg_r_shift".into(),
                value: "21".into()
            })
        );
        let cfg = base_config(&space).with(PROMPT_ID, ParamValue::Int(3));
        assert!(matches!(cfg.validate(&space), Err(ConfigError::OutOfBounds { name, .. }) if name == PROMPT_ID));
        let cfg = base_config(&space).with("grd_clahe_clip", ParamValue::Int(2));
        assert!(matches!(cfg.validate(&space), Err(ConfigError::KindMismatch { .. })));
        let cfg = base_config(&space).with("bogus", ParamValue::Int(2));
        assert_eq!(cfg.validate(&space), Err(ConfigError::Unknown("bogus".into())));
    }

    #[test]
    fn json_accepts_integral_floats() {
        let space = SearchSpace::new(vec![ParamSpec::float("x", 0.0, 4.0).unwrap()]).unwrap();
        let cfg = Configuration::from_json(r#"{"x": 2}"#, &space).unwrap();
        assert_eq!(cfg.get("x"), Some(ParamValue::Float(2.0)));
        assert!(Configuration::from_json(r#"{"x": 5.5}"#, &space).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let p = ParamSpec::integer("a", 0, 1).unwrap();
        assert!(SearchSpace::new(vec![p.clone(), p]).is_err());
        assert!(ParamSpec::float("f", 1.0, 1.0).is_err());
        assert!(ParamSpec::categorical("c", vec![]).is_err());
    }

    #[test]
    fn trial_objective_is_mean() {
        let t = Trial::new(1, Configuration::new(), vec![0.2, 0.8], 0.0);
        assert_eq!(t.objective, 0.5);
    }

    #[test]
    fn trial_log_round_trip() {
        let space = default_space(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials: Vec<Trial> = (1..=3)
            .map(|i| Trial::new(i, space.sample_uniform(&mut rng), vec![i as f64 / 7.0], 0.0))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        write_trial_log(&path, &trials).unwrap();
        assert_eq!(read_trial_log(&path).unwrap(), trials);
    }

    proptest! {
        #[test]
        fn configuration_json_round_trip(seed in any::<u64>(), n in 1usize..12) {
            let space = default_space(n);
            let cfg = space.sample_uniform(&mut ChaCha8Rng::seed_from_u64(seed));
            let back = Configuration::from_json(&cfg.to_json(), &space).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
