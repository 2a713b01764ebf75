//! Message shapes and payload codecs shared by the wire client and server.
//!
//! Images travel as base64 PNG, masks as base64 8-bit 0/255 PNG and feature
//! grids as base64 little-endian `f32` in row-major `[h][w][d]` order.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::io::{decode_mask_png, decode_png, encode_mask_png, encode_png};
use crate::types::{BinaryMask, ImageRgb8};

pub const PATH_GROUND: &str = "/v1/ground";
pub const PATH_SEGMENT: &str = "/v1/segment";
pub const PATH_FEATURES: &str = "/v1/features";
pub const PATH_CLASSIFY: &str = "/v1/classify";
pub const PATH_MATCH: &str = "/v1/match";
pub const PATH_HEALTH: &str = "/v1/health";

/// Error codes carried in `{error: {code, message}}` bodies.
pub mod codes {
    pub const NO_DETECTION: &str = "no_detection";
    pub const BAD_REQUEST: &str = "bad_request";
    pub const NOT_FOUND: &str = "not_found";
    pub const UNAVAILABLE: &str = "unavailable";
    pub const INTERNAL: &str = "internal";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundRequest {
    pub image: String,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundResponse {
    /// `[x_min, y_min, x_max, y_max]`; accepted as floats so sloppy servers
    /// can be repaired rather than rejected.
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image: String,
    pub bbox: [u32; 4],
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesRequest {
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesResponse {
    pub h: usize,
    pub w: usize,
    pub d: usize,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub image: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRequest {
    pub image: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

impl ErrorBody {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            error: ErrorDetail {
                code: code.to_owned(),
                message: message.into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub models: serde_json::Map<String, serde_json::Value>,
}

pub fn encode_image_b64(img: &ImageRgb8) -> String {
    STANDARD.encode(encode_png(img).expect("in-memory PNG encoding"))
}

pub fn decode_image_b64(s: &str) -> Result<ImageRgb8, String> {
    let bytes = STANDARD.decode(s).map_err(|e| format!("image base64: {e}"))?;
    decode_png(&bytes).map_err(|e| format!("image PNG: {e}"))
}

pub fn encode_mask_b64(mask: &BinaryMask) -> String {
    STANDARD.encode(encode_mask_png(mask).expect("in-memory PNG encoding"))
}

pub fn decode_mask_b64(s: &str) -> Result<BinaryMask, String> {
    let bytes = STANDARD.decode(s).map_err(|e| format!("mask base64: {e}"))?;
    decode_mask_png(&bytes).map_err(|e| format!("mask PNG: {e}"))
}

pub fn encode_f32_b64(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f32_b64(s: &str) -> Result<Vec<f32>, String> {
    let bytes = STANDARD.decode(s).map_err(|e| format!("feature base64: {e}"))?;
    if bytes.len() % 4 != 0 {
        return Err(format!("feature payload of {} bytes is not a multiple of 4", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f32_codec_is_little_endian() {
        assert_eq!(encode_f32_b64(&[1.0]), STANDARD.encode([0x00, 0x00, 0x80, 0x3f]));
        assert!(decode_f32_b64(&STANDARD.encode([1, 2, 3])).is_err());
    }

    #[test]
    fn error_body_shape() {
        let v = serde_json::to_value(ErrorBody::new(codes::NO_DETECTION, "nothing")).unwrap();
        assert_eq!(v, serde_json::json!({"error": {"code": "no_detection", "message": "nothing"}}));
    }

    proptest! {
        #[test]
        fn f32_round_trip_bit_identical(bits in proptest::collection::vec(any::<u32>(), 48)) {
            let values: Vec<f32> = bits.iter().map(|b| f32::from_bits(*b)).collect();
            let back = decode_f32_b64(&encode_f32_b64(&values)).unwrap();
            prop_assert_eq!(back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), bits);
        }
    }
}
