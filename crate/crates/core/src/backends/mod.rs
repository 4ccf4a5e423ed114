//! Model backends: the prompt-guided region generator, the box-prompted
//! refiner and the dense feature extractor.
//!
//! The pipeline only talks to these traits. Deterministic fixture-driven
//! implementations live in [`oracle`] and [`features`]; [`remote`] speaks the
//! JSON adapter protocol defined in [`wire`] to out-of-process model servers.

pub mod features;
pub mod oracle;
pub mod remote;
pub mod wire;

use std::cmp::Ordering;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{BackendError, Result};
use crate::geometry::{BoxCandidate, Mask, RegionCandidate, StageTag};
use crate::image::ImageRecord;
use crate::saliency::FeatureGrid;

pub use features::GridMeanFeatures;
pub use oracle::{OracleFixture, OracleGenerator, OracleRefiner};
pub use remote::{RemoteBackends, RemoteConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_prompt_length: Option<usize>,
    pub score_semantics: String,
    /// Whether concurrent calls into one instance are allowed.
    pub reentrant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionThresholds {
    pub box_threshold: f64,
    pub text_threshold: f64,
}

pub trait Generator: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    /// Raw detections for `prompts`. Callers should go through [`generate`],
    /// which enforces the score floor and output order.
    fn detect(
        &self,
        image: &ImageRecord,
        prompts: &[String],
        thresholds: DetectionThresholds,
    ) -> Result<Vec<BoxCandidate>, BackendError>;
}

pub trait Refiner: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    /// One mask per box, in box order.
    fn segment(&self, image: &ImageRecord, boxes: &[BoxCandidate]) -> Result<Vec<Mask>, BackendError>;
}

pub trait FeatureExtractor: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    /// `(gh, gw, d)` when known ahead of a call.
    fn grid_shape(&self) -> Option<(usize, usize, usize)> {
        None
    }

    fn extract(&self, image: &ImageRecord) -> Result<FeatureGrid, BackendError>;
}

/// The three models the cascade consumes.
#[derive(Clone)]
pub struct Backends {
    pub generator: Arc<dyn Generator>,
    pub refiner: Arc<dyn Refiner>,
    pub features: Arc<dyn FeatureExtractor>,
}

impl Backends {
    /// Fixture-driven generator/refiner plus the grid-mean feature extractor.
    pub fn oracle(fixture: OracleFixture) -> Self {
        let fixture = Arc::new(fixture);
        Backends {
            generator: Arc::new(OracleGenerator::new(fixture.clone())),
            refiner: Arc::new(OracleRefiner::new(fixture)),
            features: Arc::new(GridMeanFeatures::default()),
        }
    }

    pub fn remote(config: RemoteConfig) -> Self {
        let remote = Arc::new(RemoteBackends::new(config));
        Backends {
            generator: remote.clone(),
            refiner: remote.clone(),
            features: remote,
        }
    }
}

/// Score descending, then phrase, then box coordinates.
fn detection_order(a: &BoxCandidate, b: &BoxCandidate) -> Ordering {
    b.score()
        .partial_cmp(&a.score())
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.phrase().cmp(b.phrase()))
        .then_with(|| a.coords().cmp(&b.coords()))
}

/// Runs the generator and normalizes its output: detections under
/// `score_floor` are dropped and the rest sorted deterministically.
pub fn generate(
    generator: &dyn Generator,
    image: &ImageRecord,
    prompts: &[String],
    thresholds: DetectionThresholds,
) -> Result<Vec<BoxCandidate>> {
    if prompts.is_empty() {
        return Ok(Vec::new());
    }
    let mut boxes: Vec<BoxCandidate> = generator
        .detect(image, prompts, thresholds)?
        .into_iter()
        .filter(|b| b.score() >= thresholds.box_threshold)
        .collect();
    boxes.sort_by(detection_order);
    Ok(boxes)
}

/// Box prompts to refined region candidates, scores and phrases carried
/// over. Masks that come back empty are dropped with a warning.
pub fn refine(
    refiner: &dyn Refiner,
    image: &ImageRecord,
    boxes: &[BoxCandidate],
) -> Result<Vec<RegionCandidate>> {
    if boxes.is_empty() {
        return Ok(Vec::new());
    }
    let masks = refiner.segment(image, boxes)?;
    if masks.len() != boxes.len() {
        return Err(BackendError::CountMismatch {
            expected: boxes.len(),
            got: masks.len(),
        }
        .into());
    }
    let mut out = Vec::with_capacity(boxes.len());
    for (bx, mask) in boxes.iter().zip(masks) {
        if mask.shape() != (image.height(), image.width()) {
            return Err(BackendError::Contract(format!(
                "mask shape {:?} for a {}x{} image",
                mask.shape(),
                image.height(),
                image.width()
            ))
            .into());
        }
        if mask.is_empty() {
            warn!(
                "image {}: refiner returned an empty mask for `{}` {:?}; dropping it",
                image.id,
                bx.phrase(),
                bx.coords()
            );
            continue;
        }
        out.push(RegionCandidate::new(mask, bx.score(), bx.phrase(), StageTag::Refined)?);
    }
    Ok(out)
}

pub fn extract_features(extractor: &dyn FeatureExtractor, image: &ImageRecord) -> Result<FeatureGrid> {
    let grid = extractor.extract(image)?;
    let (gh, gw, _) = grid.shape();
    if gh * gw < 2 {
        return Err(crate::error::Error::DegenerateGrid(gh * gw));
    }
    Ok(grid)
}
