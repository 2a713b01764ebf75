//! Black-box model interfaces and their implementations.
//!
//! The pipeline only ever talks to four traits. [`mock::MockWorld`] implements
//! all of them deterministically for tests and desk-scale experiments;
//! [`wire::WireClient`] speaks the HTTP/JSON protocol to a model server; and
//! [`server::ProtocolServer`] exposes any [`Backends`] over that protocol.

pub mod mock;
pub mod protocol;
pub mod server;
pub mod wire;

use std::sync::Arc;

use thiserror::Error;

use crate::prompt_boost::FeatureMap;
use crate::types::{BBox, BinaryMask, ImageRgb8, Point2D};

pub use mock::{MockWorld, MockWorldSpec};
pub use server::ProtocolServer;
pub use wire::{BackendEndpoints, WireClient};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    /// The grounding model found no matching region.
    #[error("no region detected")]
    NoDetection,
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("request rejected: {0}")]
    Rejected(String),
}

pub trait GroundingBackend: Send + Sync {
    fn ground(&self, image: &ImageRgb8, sentence: &str) -> Result<BBox, BackendError>;
}

pub trait SegmentationBackend: Send + Sync {
    fn segment(
        &self,
        image: &ImageRgb8,
        bbox: BBox,
        points: &[Point2D],
    ) -> Result<BinaryMask, BackendError>;
}

pub trait FeatureBackend: Send + Sync {
    fn features(&self, image: &ImageRgb8) -> Result<FeatureMap, BackendError>;
}

pub trait ScoringBackend: Send + Sync {
    /// Zero-shot class probabilities, one per label, summing to one.
    fn classify(&self, image: &ImageRgb8, labels: &[String]) -> Result<Vec<f64>, BackendError>;
    /// Image-text similarities in `[0, 1]`, one per text.
    fn match_texts(&self, image: &ImageRgb8, texts: &[String]) -> Result<Vec<f64>, BackendError>;
}

/// The four model roles the pipeline composes.
#[derive(Clone)]
pub struct Backends {
    pub grounding: Arc<dyn GroundingBackend>,
    pub segmentation: Arc<dyn SegmentationBackend>,
    pub features: Arc<dyn FeatureBackend>,
    pub scoring: Arc<dyn ScoringBackend>,
}

impl Backends {
    /// One object serving every role.
    pub fn from_single<T>(backend: Arc<T>) -> Self
    where
        T: GroundingBackend + SegmentationBackend + FeatureBackend + ScoringBackend + 'static,
    {
        Self {
            grounding: backend.clone(),
            segmentation: backend.clone(),
            features: backend.clone(),
            scoring: backend,
        }
    }

    pub fn mock(spec: MockWorldSpec) -> Self {
        Self::from_single(Arc::new(MockWorld::new(spec)))
    }

    pub fn wire(endpoints: BackendEndpoints) -> Result<Self, BackendError> {
        Ok(Self::from_single(Arc::new(WireClient::new(endpoints)?)))
    }
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends").finish_non_exhaustive()
    }
}
