//! Zero-shot anomaly segmentation by regularizing a cascade of a
//! prompt-guided region detector and a box-prompted segmenter.
//!
//! The baseline queries the detector with a naive "anomaly" prompt and fuses
//! every refined region. The regularized variant adds expert language
//! prompts, object-property rules, kNN self-similarity saliency rescoring
//! and top-K confidence selection before fusing.

pub mod backends;
pub mod desk;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod maps;
pub mod pipeline;
pub mod profile;
pub mod saliency;

pub use backends::Backends;
pub use error::{BackendError, Error, Result};
pub use geometry::{mask_area, overlap, rasterize_box, BoxCandidate, Mask, OverlapMeasure, RegionCandidate, StageTag};
pub use image::ImageRecord;
pub use maps::{AnomalyMap, SaliencyMap};
pub use pipeline::{PipelineOutput, PipelineTrace};
pub use profile::{Mode, ProfileDocument, PromptFamily, PromptProfile, NAIVE_PROMPT};
pub use saliency::FeatureGrid;
