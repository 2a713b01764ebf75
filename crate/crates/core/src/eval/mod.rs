//! Datasets on disk, Dice, evaluation reports and plots.

mod plots;
mod report;
mod results;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{load_image, load_mask, DecodeError, EncodeError};
use crate::pipeline::Sample;
use crate::types::{BinaryMask, ShapeError};

pub use plots::{emit_plots, normalize_min_max, PlotFiles};
pub use report::{evaluate, pearson, EvalReport, SampleEval};
pub use results::{read_results, write_results, SampleRecord, RESULTS_FILE};
pub use synthetic::{generate_synthetic_benchmark, synthetic_task, write_synthetic_benchmark};

pub const IMAGES_DIR: &str = "images";
pub const MASKS_DIR: &str = "masks";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    Decode { path: PathBuf, source: DecodeError },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("no ground-truth mask for sample `{0}`")]
    MissingTruth(String),
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("listed file does not exist: {0}")]
    MissingFile(PathBuf),
    #[error("malformed record: {0}")]
    Format(String),
}

/// Dice coefficient; two empty masks agree perfectly.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64, ShapeError> {
    b.ensure_same_size(a.width(), a.height())?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        inter += (x && y) as usize;
        na += x as usize;
        nb += y as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
}

/// A directory with `images/<id>.png` and optionally `masks/<id>.png`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub samples: Vec<DatasetEntry>,
}

impl DatasetManifest {
    /// Lists the dataset under `root`, sorted by id.
    pub fn scan(root: impl AsRef<Path>) -> Result<Self, EvalError> {
        let root = root.as_ref().to_path_buf();
        let images = root.join(IMAGES_DIR);
        if !images.is_dir() {
            return Err(EvalError::MissingFile(images));
        }
        let mut samples = Vec::new();
        for entry in fs::read_dir(&images)? {
            let path = entry?.path();
            let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).filter(|_| is_png) else {
                continue;
            };
            let mask = root.join(MASKS_DIR).join(format!("{id}.png"));
            samples.push(DatasetEntry {
                id: id.to_owned(),
                image: path.clone(),
                mask: mask.is_file().then_some(mask),
            });
        }
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        let manifest = Self { root, samples };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let mut seen = BTreeSet::new();
        for s in &self.samples {
            if !seen.insert(&s.id) {
                return Err(EvalError::DuplicateId(s.id.clone()));
            }
            for p in std::iter::once(&s.image).chain(s.mask.as_ref()) {
                if !p.is_file() {
                    return Err(EvalError::MissingFile(p.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn load_samples(&self) -> Result<Vec<Sample>, EvalError> {
        self.samples
            .iter()
            .map(|s| {
                let image = load_image(&s.image).map_err(|source| EvalError::Decode {
                    path: s.image.clone(),
                    source,
                })?;
                Ok(Sample::new(s.id.clone(), image))
            })
            .collect()
    }

    /// Ground-truth masks for the samples that have one.
    pub fn load_truths(&self) -> Result<BTreeMap<String, BinaryMask>, EvalError> {
        let mut out = BTreeMap::new();
        for s in &self.samples {
            if let Some(path) = &s.mask {
                let mask = load_mask(path).map_err(|source| EvalError::Decode {
                    path: path.clone(),
                    source,
                })?;
                out.insert(s.id.clone(), mask);
            }
        }
        Ok(out)
    }
}
