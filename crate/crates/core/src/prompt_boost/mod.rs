//! Supplementary positive point prompts derived from a bounding box.
//!
//! The box centre is the anchor. Feature-grid cells inside the box are ranked
//! by cosine similarity to the anchor's feature, the best `k` are kept, and
//! their coordinates are clustered into `n` centroids which become the points.

mod kmeans;

pub use kmeans::{inertia, kmeans, kmeans_centroids, KMeansFit, MAX_ITERATIONS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, FeatureBackend};
use crate::types::{BBox, ImageRgb8, Point2D};

/// Size of the similarity candidate pool.
pub const CANDIDATE_POOL: usize = 10;
/// Upper bound of the tunable point count.
pub const MAX_POINTS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum BoostError {
    #[error("point ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds { x: f64, y: f64, width: u32, height: u32 },
    #[error("no feature cell centre falls inside the box")]
    EmptyBox,
    #[error("feature map buffer has {actual} values, expected {expected}")]
    BadFeatureShape { expected: usize, actual: usize },
    #[error("feature map contains non-finite values")]
    NonFinite,
}

/// Dense `H' x W' x D` feature grid over an image of known pixel size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    height_cells: usize,
    width_cells: usize,
    dim: usize,
    data: Vec<f32>,
    image_width: u32,
    image_height: u32,
}

impl FeatureMap {
    pub fn new(
        height_cells: usize,
        width_cells: usize,
        dim: usize,
        data: Vec<f32>,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, BoostError> {
        let expected = height_cells * width_cells * dim;
        if expected == 0 || data.len() != expected {
            return Err(BoostError::BadFeatureShape {
                expected,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(BoostError::NonFinite);
        }
        Ok(Self {
            height_cells,
            width_cells,
            dim,
            data,
            image_width,
            image_height,
        })
    }

    pub fn height_cells(&self) -> usize {
        self.height_cells
    }

    pub fn width_cells(&self) -> usize {
        self.width_cells
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn image_size(&self) -> (u32, u32) {
        (self.image_width, self.image_height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width_cells + col) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Pixel coordinate to continuous grid coordinate `(col, row)`.
    pub fn to_grid(&self, p: Point2D) -> (f64, f64) {
        let gx = (p.x + 0.5) * self.width_cells as f64 / self.image_width as f64 - 0.5;
        let gy = (p.y + 0.5) * self.height_cells as f64 / self.image_height as f64 - 0.5;
        (gx, gy)
    }

    /// Pixel coordinate of a cell centre; inverse of [`FeatureMap::to_grid`].
    pub fn cell_center(&self, row: usize, col: usize) -> Point2D {
        Point2D::new(
            (col as f64 + 0.5) * self.image_width as f64 / self.width_cells as f64 - 0.5,
            (row as f64 + 0.5) * self.image_height as f64 / self.height_cells as f64 - 0.5,
        )
    }

    /// Cell whose footprint contains `p`, clamped to the grid.
    pub fn containing_cell(&self, p: Point2D) -> (usize, usize) {
        let (gx, gy) = self.to_grid(p);
        let col = ((gx + 0.5).floor().max(0.0) as usize).min(self.width_cells - 1);
        let row = ((gy + 0.5).floor().max(0.0) as usize).min(self.height_cells - 1);
        (row, col)
    }
}

/// Geometric centre of the box.
pub fn anchor_point(bbox: BBox) -> Point2D {
    Point2D::new(
        (bbox.x_min as f64 + bbox.x_max as f64) / 2.0,
        (bbox.y_min as f64 + bbox.y_max as f64) / 2.0,
    )
}

/// Bilinear interpolation of the feature grid at a pixel position, clamped at
/// the grid borders.
pub fn feature_at(fm: &FeatureMap, p: Point2D) -> Result<Vec<f64>, BoostError> {
    if !p.is_inside_image(fm.image_width, fm.image_height) {
        return Err(BoostError::OutOfBounds {
            x: p.x,
            y: p.y,
            width: fm.image_width,
            height: fm.image_height,
        });
    }
    let (gx, gy) = fm.to_grid(p);
    let gx = gx.clamp(0.0, (fm.width_cells - 1) as f64);
    let gy = gy.clamp(0.0, (fm.height_cells - 1) as f64);
    let (c0, r0) = (gx.floor() as usize, gy.floor() as usize);
    let c1 = (c0 + 1).min(fm.width_cells - 1);
    let r1 = (r0 + 1).min(fm.height_cells - 1);
    let (fx, fy) = (gx - c0 as f64, gy - r0 as f64);

    let weights = [
        ((r0, c0), (1.0 - fx) * (1.0 - fy)),
        ((r0, c1), fx * (1.0 - fy)),
        ((r1, c0), (1.0 - fx) * fy),
        ((r1, c1), fx * fy),
    ];
    let mut out = vec![0.0; fm.dim];
    for ((r, c), w) in weights {
        if w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(fm.cell(r, c)) {
            *o += w * *v as f64;
        }
    }
    Ok(out)
}

pub fn cosine_similarity(a: &[f64], b: &[f32]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let y = *y as f64;
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// The `k` in-box cell centres most similar to `anchor_feat`, excluding the
/// anchor's own cell. Ties keep row-major order.
pub fn topk_similar(
    fm: &FeatureMap,
    anchor_feat: &[f64],
    bbox: BBox,
    k: usize,
) -> Result<Vec<(Point2D, f64)>, BoostError> {
    let anchor_cell = fm.containing_cell(anchor_point(bbox));
    let mut any_inside = false;
    let mut scored = Vec::new();
    for row in 0..fm.height_cells {
        for col in 0..fm.width_cells {
            let center = fm.cell_center(row, col);
            if !bbox.contains(center) {
                continue;
            }
            any_inside = true;
            if (row, col) == anchor_cell {
                continue;
            }
            scored.push((center, cosine_similarity(anchor_feat, fm.cell(row, col))));
        }
    }
    if !any_inside {
        return Err(BoostError::EmptyBox);
    }
    // stable sort keeps row-major order among equal similarities
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored.truncate(k);
    Ok(scored)
}

/// Seed used for centroid initialisation inside the pipeline.
pub const DEFAULT_BOOST_SEED: u64 = 0;

/// Generates up to `n_points` positive prompts inside `bbox`. Zero skips
/// boosting; a box too small to hold any candidate cell yields no points.
pub fn boost(
    image_for_features: &ImageRgb8,
    bbox: BBox,
    n_points: usize,
    features: &dyn FeatureBackend,
    seed: u64,
) -> Result<Vec<Point2D>, BackendError> {
    if n_points == 0 {
        return Ok(Vec::new());
    }
    let fm = features.features(image_for_features)?;
    let anchor = anchor_point(bbox);
    let anchor_feat = feature_at(&fm, anchor).map_err(|e| BackendError::Protocol(e.to_string()))?;
    let candidates = match topk_similar(&fm, &anchor_feat, bbox, CANDIDATE_POOL) {
        Ok(c) => c,
        Err(BoostError::EmptyBox) => return Ok(Vec::new()),
        Err(e) => return Err(BackendError::Protocol(e.to_string())),
    };
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let points: Vec<Point2D> = candidates.into_iter().map(|(p, _)| p).collect();
    Ok(kmeans_centroids(&points, n_points, seed))
}
