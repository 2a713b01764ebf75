use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{dice, EvalError};
use crate::pipeline::{SampleResult, SampleStatus};
use crate::search_space::Configuration;
use crate::types::BinaryMask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub id: String,
    pub dice: f64,
    pub s_val: f64,
    pub status: SampleStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted by id, so the report does not depend on input order.
    pub per_sample: Vec<SampleEval>,
    /// Mean over all samples; failed samples count as Dice 0.
    pub mean_dice: f64,
    /// Mean over samples with status `ok` only.
    pub mean_dice_ok: Option<f64>,
    /// Mean over all samples; failed samples carry the floor score 0.
    pub mean_s_val: f64,
    /// Between `s_val` and Dice over `ok` samples.
    pub pearson_r: Option<f64>,
    pub grounding_failure_rate: f64,
    pub backend_error_rate: f64,
    /// Mean Dice over samples outside the adaptation subset, when one is given.
    pub mean_dice_excluding_subset: Option<f64>,
    pub config: Configuration,
}

/// Pearson correlation; `None` for fewer than three pairs or zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "paired samples");
    let n = xs.len();
    if n < 3 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores every result against its ground truth. `exclude` names samples
/// (typically the adaptation subset) left out of `mean_dice_excluding_subset`.
pub fn evaluate(
    results: &[SampleResult],
    truths: &BTreeMap<String, BinaryMask>,
    config: &Configuration,
    exclude: Option<&BTreeSet<String>>,
) -> Result<EvalReport, EvalError> {
    let mut per_sample = results
        .iter()
        .map(|r| {
            let truth = truths
                .get(&r.sample_id)
                .ok_or_else(|| EvalError::MissingTruth(r.sample_id.clone()))?;
            let d = match (&r.status, &r.mask) {
                (SampleStatus::Ok, Some(mask)) => dice(mask, truth)?,
                _ => 0.0,
            };
            Ok(SampleEval {
                id: r.sample_id.clone(),
                dice: d,
                s_val: r.score.s_val,
                status: r.status,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    per_sample.sort_by(|a, b| a.id.cmp(&b.id));

    let n = per_sample.len().max(1) as f64;
    let ok: Vec<&SampleEval> = per_sample.iter().filter(|s| s.status == SampleStatus::Ok).collect();
    let rate = |status| per_sample.iter().filter(|s| s.status == status).count() as f64 / n;
    let pearson_r = pearson(
        &ok.iter().map(|s| s.s_val).collect::<Vec<_>>(),
        &ok.iter().map(|s| s.dice).collect::<Vec<_>>(),
    );
    Ok(EvalReport {
        mean_dice: mean_of(per_sample.iter().map(|s| s.dice)).unwrap_or(0.0),
        mean_dice_ok: mean_of(ok.iter().map(|s| s.dice)),
        mean_s_val: mean_of(per_sample.iter().map(|s| s.s_val)).unwrap_or(0.0),
        pearson_r,
        grounding_failure_rate: rate(SampleStatus::GroundingFailed),
        backend_error_rate: rate(SampleStatus::BackendError),
        mean_dice_excluding_subset: exclude.and_then(|ex| {
            mean_of(per_sample.iter().filter(|s| !ex.contains(&s.id)).map(|s| s.dice))
        }),
        per_sample,
        config: config.clone(),
    })
}
