//! Per-sample results manifest: `results.jsonl` plus `masks/<id>.png`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, MASKS_DIR};
use crate::io::{load_mask, save_mask};
use crate::pipeline::{SampleResult, SampleStatus};
use crate::types::{BBox, Point2D};
use crate::validator::ValidationScore;

pub const RESULTS_FILE: &str = "results.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub status: SampleStatus,
    pub bbox: Option<BBox>,
    pub points: Vec<[f64; 2]>,
    pub score: ValidationScore,
    /// Relative to the results directory.
    pub mask_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn write_results(dir: impl AsRef<Path>, results: &[SampleResult]) -> Result<(), EvalError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join(MASKS_DIR))?;
    let mut out = BufWriter::new(fs::File::create(dir.join(RESULTS_FILE))?);
    for r in results {
        let mask_path = match &r.mask {
            Some(mask) => {
                let rel = format!("{MASKS_DIR}/{}.png", r.sample_id);
                save_mask(mask, dir.join(&rel))?;
                Some(rel)
            }
            None => None,
        };
        let record = SampleRecord {
            sample_id: r.sample_id.clone(),
            status: r.status,
            bbox: r.bbox,
            points: r.points.iter().map(|p| [p.x, p.y]).collect(),
            score: r.score,
            mask_path,
            error: r.error.clone(),
        };
        serde_json::to_writer(&mut out, &record).map_err(|e| EvalError::Format(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results(dir: impl AsRef<Path>) -> Result<Vec<SampleResult>, EvalError> {
    let dir = dir.as_ref();
    let file = BufReader::new(fs::File::open(dir.join(RESULTS_FILE))?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| EvalError::Format(e.to_string()))?;
        let mask = match &rec.mask_path {
            Some(rel) => {
                let path = dir.join(rel);
                Some(load_mask(&path).map_err(|source| EvalError::Decode { path, source })?)
            }
            None => None,
        };
        if mask.is_some() != (rec.status == SampleStatus::Ok) {
            return Err(EvalError::Format(format!(
                "sample `{}`: a mask must be present exactly when status is ok",
                rec.sample_id
            )));
        }
        out.push(SampleResult {
            sample_id: rec.sample_id,
            mask,
            bbox: rec.bbox,
            points: rec.points.iter().map(|[x, y]| Point2D::new(*x, *y)).collect(),
            score: rec.score,
            status: rec.status,
            error: rec.error,
        });
    }
    Ok(out)
}
