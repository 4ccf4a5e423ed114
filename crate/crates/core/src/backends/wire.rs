//! JSON bodies of the model-adapter protocol.
//!
//! ```text
//! POST /v1/generate {image, prompts, box_threshold, text_threshold}
//!     -> {detections: [{box: [x0, y0, x1, y1], score, phrase}]}
//! POST /v1/refine   {image, boxes: [[x0, y0, x1, y1]]} -> {masks: [rle]}
//! POST /v1/features {image} -> {shape: [gh, gw, d], data}
//! ```
//!
//! `image` is a base64 PNG; `data` is base64 little-endian `f32`, row-major.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoxCandidate, Mask};
use crate::image::ImageRecord;
use crate::saliency::FeatureGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub image: String,
    pub prompts: Vec<String>,
    pub box_threshold: f64,
    pub text_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
    pub phrase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub detections: Vec<WireDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRequest {
    pub image: String,
    pub boxes: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResponse {
    pub masks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesRequest {
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesResponse {
    pub shape: [usize; 3],
    pub data: String,
}

pub fn encode_image(image: &ImageRecord) -> Result<String> {
    Ok(STANDARD.encode(image.to_png_bytes()?))
}

pub fn decode_image(id: &str, category: &str, b64: &str) -> Result<ImageRecord> {
    let bytes = STANDARD
        .decode(b64)
        .map_err(|e| Error::Codec(format!("image base64: {e}")))?;
    ImageRecord::from_png_bytes(id, category, &bytes)
}

pub fn box_to_wire(b: &BoxCandidate) -> [f64; 4] {
    let (x0, y0, x1, y1) = b.coords();
    [x0 as f64, y0 as f64, x1 as f64, y1 as f64]
}

/// Snaps a real-valued box outward to whole pixels and clips it to the image.
pub fn box_from_wire(
    bbox: [f64; 4],
    score: f64,
    phrase: &str,
    height: usize,
    width: usize,
) -> Result<BoxCandidate> {
    let clip = |v: f64, hi: usize| v.clamp(0.0, hi as f64);
    let x0 = clip(bbox[0], width).floor() as u32;
    let y0 = clip(bbox[1], height).floor() as u32;
    let x1 = clip(bbox[2], width).ceil() as u32;
    let y1 = clip(bbox[3], height).ceil() as u32;
    BoxCandidate::new(
        (x0, y0, x1, y1),
        score.clamp(0.0, 1.0),
        phrase.trim().to_lowercase(),
        height,
        width,
    )
}

pub fn detection_to_wire(b: &BoxCandidate) -> WireDetection {
    WireDetection {
        bbox: box_to_wire(b),
        score: b.score(),
        phrase: b.phrase().to_string(),
    }
}

pub fn encode_features(grid: &FeatureGrid) -> FeaturesResponse {
    let (gh, gw, d) = grid.shape();
    let mut bytes = Vec::with_capacity(grid.data().len() * 4);
    for &v in grid.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    FeaturesResponse {
        shape: [gh, gw, d],
        data: STANDARD.encode(bytes),
    }
}

pub fn decode_features(resp: &FeaturesResponse) -> Result<FeatureGrid> {
    let bytes = STANDARD
        .decode(&resp.data)
        .map_err(|e| Error::Codec(format!("feature base64: {e}")))?;
    let [gh, gw, d] = resp.shape;
    if bytes.len() != gh * gw * d * 4 {
        return Err(Error::Codec(format!(
            "feature payload has {} bytes for shape {:?}",
            bytes.len(),
            resp.shape
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    FeatureGrid::from_raw(gh, gw, d, data)
}

pub fn encode_masks(masks: &[Mask]) -> RefineResponse {
    RefineResponse {
        masks: masks.iter().map(Mask::to_rle).collect(),
    }
}
