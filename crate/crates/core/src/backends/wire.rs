//! Blocking HTTP/JSON client for a remote model server.

use std::thread;
use std::time::Duration;

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::protocol::*;
use super::{BackendError, FeatureBackend, GroundingBackend, ScoringBackend, SegmentationBackend};
use crate::prompt_boost::FeatureMap;
use crate::types::{BBox, BinaryMask, ImageRgb8, Point2D};

/// Tolerance on the probability simplex before a response is renormalised.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;
const MAX_BODY_BYTES: u64 = 512 * 1024 * 1024;
const POOL_SIZE: usize = 16;
const RETRY_BACKOFF: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendEndpoints {
    pub base_url: String,
    /// Per-request timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    /// Additional attempts after a transport failure or 5xx response.
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    2
}

impl BackendEndpoints {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout: default_timeout(),
            retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return Err(format!("timeout must be positive, got {}", self.timeout));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(format!("base url `{}` must start with http:// or https://", self.base_url));
        }
        Ok(())
    }
}

/// Implements all four backend roles against one server. Cheap to share
/// across threads; the underlying agent keeps a bounded connection pool.
#[derive(Debug, Clone)]
pub struct WireClient {
    endpoints: BackendEndpoints,
    agent: ureq::Agent,
}

impl WireClient {
    pub fn new(endpoints: BackendEndpoints) -> Result<Self, BackendError> {
        endpoints.validate().map_err(BackendError::Rejected)?;
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(endpoints.timeout)))
            .max_idle_connections(POOL_SIZE)
            .max_idle_connections_per_host(POOL_SIZE)
            .build();
        Ok(Self {
            endpoints,
            agent: ureq::Agent::new_with_config(config),
        })
    }

    pub fn endpoints(&self) -> &BackendEndpoints {
        &self.endpoints
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.endpoints.base_url.trim_end_matches('/'), path)
    }

    /// Every endpoint is idempotent, so transport failures and 5xx responses
    /// are retried; 4xx responses are final.
    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, BackendError> {
        let url = self.url(path);
        let mut last = String::new();
        for attempt in 0..=self.endpoints.retries {
            if attempt > 0 {
                warn!("retrying {url} (attempt {} of {}): {last}", attempt + 1, self.endpoints.retries + 1);
                thread::sleep(RETRY_BACKOFF * attempt);
            }
            let mut response = match self.agent.post(&url).send_json(body) {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = response.status().as_u16();
            let text = match response.body_mut().with_config().limit(MAX_BODY_BYTES).read_to_string() {
                Ok(t) => t,
                Err(e) => {
                    last = format!("reading response body: {e}");
                    continue;
                }
            };
            if (200..300).contains(&status) {
                return serde_json::from_str(&text)
                    .map_err(|e| BackendError::Protocol(format!("{path}: malformed response: {e}")));
            }
            let detail = serde_json::from_str::<ErrorBody>(&text)
                .map(|b| b.error)
                .unwrap_or_else(|_| ErrorDetail {
                    code: String::new(),
                    message: text.chars().take(200).collect(),
                });
            if detail.code == codes::NO_DETECTION {
                return Err(BackendError::NoDetection);
            }
            if status >= 500 {
                last = format!("HTTP {status}: {}", detail.message);
                continue;
            }
            return Err(BackendError::Rejected(format!("HTTP {status}: {}", detail.message)));
        }
        Err(BackendError::Unavailable(format!(
            "{url} failed after {} attempts: {last}",
            self.endpoints.retries + 1
        )))
    }

    /// `GET /v1/health`.
    pub fn health(&self) -> Result<HealthResponse, BackendError> {
        let url = self.url(PATH_HEALTH);
        let mut response = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        if response.status().as_u16() != 200 {
            return Err(BackendError::Unavailable(format!("health returned {}", response.status())));
        }
        response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Protocol(e.to_string()))
    }
}

/// Rounds outward and clamps a server box to the image. The flag reports
/// whether anything changed.
pub fn repair_bbox(raw: [f64; 4], width: u32, height: u32) -> Result<(BBox, bool), BackendError> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(BackendError::Protocol(format!("non-finite box {raw:?}")));
    }
    let clamp = |v: f64, hi: u32| v.clamp(0.0, hi as f64) as u32;
    let bbox = BBox {
        x_min: clamp(raw[0].floor(), width),
        y_min: clamp(raw[1].floor(), height),
        x_max: clamp(raw[2].ceil(), width),
        y_max: clamp(raw[3].ceil(), height),
    };
    if bbox.x_min >= bbox.x_max || bbox.y_min >= bbox.y_max {
        return Err(BackendError::Protocol(format!("degenerate box {raw:?} for {width}x{height} image")));
    }
    let same = [bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max]
        .iter()
        .zip(raw)
        .all(|(a, b)| *a as f64 == b);
    Ok((bbox, !same))
}

/// Clamps negatives and renormalises onto the simplex.
pub fn repair_probabilities(mut probs: Vec<f64>, expected_len: usize) -> Result<(Vec<f64>, bool), BackendError> {
    if probs.len() != expected_len {
        return Err(BackendError::Protocol(format!(
            "expected {expected_len} probabilities, got {}",
            probs.len()
        )));
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(BackendError::Protocol("non-finite probability".into()));
    }
    let mut repaired = false;
    for p in probs.iter_mut().filter(|p| **p < 0.0) {
        *p = 0.0;
        repaired = true;
    }
    let sum: f64 = probs.iter().sum();
    if sum <= 0.0 {
        return Err(BackendError::Protocol("probabilities sum to zero".into()));
    }
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        probs.iter_mut().for_each(|p| *p /= sum);
        repaired = true;
    }
    Ok((probs, repaired))
}

/// Clamps similarities into `[0, 1]`.
pub fn repair_similarities(mut scores: Vec<f64>, expected_len: usize) -> Result<(Vec<f64>, bool), BackendError> {
    if scores.len() != expected_len {
        return Err(BackendError::Protocol(format!(
            "expected {expected_len} scores, got {}",
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(BackendError::Protocol("NaN similarity".into()));
    }
    let mut repaired = false;
    for s in scores.iter_mut() {
        let c = s.clamp(0.0, 1.0);
        if c != *s {
            *s = c;
            repaired = true;
        }
    }
    Ok((scores, repaired))
}

impl GroundingBackend for WireClient {
    fn ground(&self, image: &ImageRgb8, sentence: &str) -> Result<BBox, BackendError> {
        if sentence.trim().is_empty() {
            return Err(BackendError::Rejected("empty grounding sentence".into()));
        }
        let resp: GroundResponse = self.post(
            PATH_GROUND,
            &GroundRequest {
                image: encode_image_b64(image),
                sentence: sentence.to_owned(),
            },
        )?;
        let (bbox, repaired) = repair_bbox(resp.bbox, image.width(), image.height())?;
        if repaired {
            warn!("grounding box {:?} clamped to {bbox:?}", resp.bbox);
        }
        Ok(bbox)
    }
}

impl SegmentationBackend for WireClient {
    fn segment(&self, image: &ImageRgb8, bbox: BBox, points: &[Point2D]) -> Result<BinaryMask, BackendError> {
        let resp: SegmentResponse = self.post(
            PATH_SEGMENT,
            &SegmentRequest {
                image: encode_image_b64(image),
                bbox: [bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max],
                points: points.iter().map(|p| [p.x, p.y]).collect(),
            },
        )?;
        let mask = decode_mask_b64(&resp.mask).map_err(BackendError::Protocol)?;
        if mask.dimensions() != image.dimensions() {
            return Err(BackendError::Protocol(format!(
                "mask is {:?}, image is {:?}",
                mask.dimensions(),
                image.dimensions()
            )));
        }
        Ok(mask)
    }
}

impl FeatureBackend for WireClient {
    fn features(&self, image: &ImageRgb8) -> Result<FeatureMap, BackendError> {
        let resp: FeaturesResponse = self.post(
            PATH_FEATURES,
            &FeaturesRequest {
                image: encode_image_b64(image),
            },
        )?;
        let data = decode_f32_b64(&resp.data).map_err(BackendError::Protocol)?;
        FeatureMap::new(resp.h, resp.w, resp.d, data, image.width(), image.height())
            .map_err(|e| BackendError::Protocol(e.to_string()))
    }
}

impl ScoringBackend for WireClient {
    fn classify(&self, image: &ImageRgb8, labels: &[String]) -> Result<Vec<f64>, BackendError> {
        if labels.is_empty() {
            return Err(BackendError::Rejected("no labels".into()));
        }
        let resp: ClassifyResponse = self.post(
            PATH_CLASSIFY,
            &ClassifyRequest {
                image: encode_image_b64(image),
                labels: labels.to_vec(),
            },
        )?;
        let raw = resp.probs.clone();
        let (probs, repaired) = repair_probabilities(resp.probs, labels.len())?;
        if repaired {
            warn!("classification probabilities {raw:?} renormalised");
        }
        Ok(probs)
    }

    fn match_texts(&self, image: &ImageRgb8, texts: &[String]) -> Result<Vec<f64>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::Rejected("no texts".into()));
        }
        let resp: MatchResponse = self.post(
            PATH_MATCH,
            &MatchRequest {
                image: encode_image_b64(image),
                texts: texts.to_vec(),
            },
        )?;
        let raw = resp.scores.clone();
        let (scores, repaired) = repair_similarities(resp.scores, texts.len())?;
        if repaired {
            warn!("similarities {raw:?} clamped to [0, 1]");
        }
        Ok(scores)
    }
}
