//! Label-free proxy for mask quality.
//!
//! The candidate mask is applied to the image (target kept, everything else
//! black) and judged by a vision-language scorer twice: as the probability of
//! the target label against contrastive classes, and as the mean image-text
//! similarity over the task descriptors. The proxy is their unweighted sum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, ScoringBackend};
use crate::task::TaskDefinition;
use crate::types::{BinaryMask, ImageRgb8, ShapeError};

#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationScore {
    pub s_zc: f64,
    pub s_mt: f64,
    pub s_val: f64,
}

impl ValidationScore {
    pub fn new(s_zc: f64, s_mt: f64) -> Self {
        Self {
            s_zc,
            s_mt,
            s_val: s_zc + s_mt,
        }
    }

    /// Score assigned when no mask could be produced.
    pub fn floor() -> Self {
        Self::new(0.0, 0.0)
    }
}

/// Keeps pixels under the mask and blacks out the rest.
pub fn masked_image(image: &ImageRgb8, mask: &BinaryMask) -> Result<ImageRgb8, ShapeError> {
    mask.ensure_same_size(image.width(), image.height())?;
    let mut keep = mask.as_slice().iter();
    Ok(image.map_pixels(|p| if *keep.next().expect("same size") { p } else { [0, 0, 0] }))
}

fn zero_shot_on(masked: &ImageRgb8, task: &TaskDefinition, scorer: &dyn ScoringBackend) -> Result<f64, BackendError> {
    let labels = task.classification_labels();
    let probs = scorer.classify(masked, &labels)?;
    probs
        .first()
        .copied()
        .ok_or_else(|| BackendError::Protocol("empty probability vector".into()))
}

fn match_on(masked: &ImageRgb8, task: &TaskDefinition, scorer: &dyn ScoringBackend) -> Result<f64, BackendError> {
    let scores = scorer.match_texts(masked, task.descriptors())?;
    if scores.is_empty() {
        return Err(BackendError::Protocol("empty similarity vector".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Probability of the target label among `[target] + contrastive classes`.
pub fn zero_shot_score(
    image: &ImageRgb8,
    mask: &BinaryMask,
    task: &TaskDefinition,
    scorer: &dyn ScoringBackend,
) -> Result<f64, ValidationError> {
    Ok(zero_shot_on(&masked_image(image, mask)?, task, scorer)?)
}

/// Mean similarity between the masked image and the task descriptors.
pub fn match_score(
    image: &ImageRgb8,
    mask: &BinaryMask,
    task: &TaskDefinition,
    scorer: &dyn ScoringBackend,
) -> Result<f64, ValidationError> {
    Ok(match_on(&masked_image(image, mask)?, task, scorer)?)
}

pub fn validate(
    image: &ImageRgb8,
    mask: &BinaryMask,
    task: &TaskDefinition,
    scorer: &dyn ScoringBackend,
) -> Result<ValidationScore, ValidationError> {
    let masked = masked_image(image, mask)?;
    Ok(ValidationScore::new(
        zero_shot_on(&masked, task, scorer)?,
        match_on(&masked, task, scorer)?,
    ))
}
