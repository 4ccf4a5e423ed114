use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{Mask, RegionCandidate};
use crate::maps::SaliencyMap;
use crate::profile::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Generated,
    Refined,
    Filtered,
    Rescored,
    Selected,
    Fused,
}

impl StageName {
    pub const ORDER: [StageName; 6] = [
        StageName::Generated,
        StageName::Refined,
        StageName::Filtered,
        StageName::Rescored,
        StageName::Selected,
        StageName::Fused,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Generated => "generated",
            StageName::Refined => "refined",
            StageName::Filtered => "filtered",
            StageName::Rescored => "rescored",
            StageName::Selected => "selected",
            StageName::Fused => "fused",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSnapshot {
    pub stage: StageName,
    /// The stage was bypassed (baseline mode or an ablation); its
    /// candidates are the previous stage's, passed through.
    pub skipped: bool,
    pub candidates: Vec<RegionCandidate>,
}

/// Saliency at feature-grid resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyGrid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl From<&SaliencyMap> for SaliencyGrid {
    fn from(map: &SaliencyMap) -> Self {
        SaliencyGrid {
            height: map.height(),
            width: map.width(),
            values: map.values().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: StageName,
    pub ms: f64,
}

/// Stage-by-stage record of one pipeline run.
///
/// Timings are kept out of the serialized form so that trace files are a
/// pure function of the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub image_id: String,
    pub mode: Mode,
    pub prompts: Vec<String>,
    pub stages: Vec<StageSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_mask: Option<Mask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saliency: Option<SaliencyGrid>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub saliency_prompts: Vec<f64>,
    pub map_max: f64,
    pub covered_pixels: usize,
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

impl PipelineTrace {
    pub fn new(image_id: &str, mode: Mode, prompts: Vec<String>) -> Self {
        PipelineTrace {
            image_id: image_id.to_string(),
            mode,
            prompts,
            stages: Vec::with_capacity(6),
            object_mask: None,
            saliency: None,
            saliency_prompts: Vec::new(),
            map_max: 0.0,
            covered_pixels: 0,
            timings: Vec::new(),
        }
    }

    pub fn stage(&self, name: StageName) -> Option<&StageSnapshot> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn stage_counts(&self) -> BTreeMap<String, usize> {
        self.stages
            .iter()
            .map(|s| (s.stage.as_str().to_string(), s.candidates.len()))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}
