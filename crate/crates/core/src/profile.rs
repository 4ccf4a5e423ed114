//! Expert-authored prompt profiles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::OverlapMeasure;

/// Naive class-agnostic prompt used by the baseline and by the
/// language-ablated variant.
pub const NAIVE_PROMPT: &str = "anomaly";

pub const PROFILE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "saa")]
    Saa,
    #[default]
    #[serde(rename = "saa_plus", alias = "saa+")]
    SaaPlus,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Saa => "saa",
            Mode::SaaPlus => "saa_plus",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saa" => Ok(Mode::Saa),
            "saa+" | "saa_plus" | "saa-plus" => Ok(Mode::SaaPlus),
            other => Err(Error::InvalidProfile(format!("unknown mode `{other}`"))),
        }
    }
}

/// One of the four prompt families that can be ablated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptFamily {
    Language,
    Property,
    Saliency,
    Confidence,
}

impl PromptFamily {
    pub const ALL: [PromptFamily; 4] = [
        PromptFamily::Language,
        PromptFamily::Property,
        PromptFamily::Saliency,
        PromptFamily::Confidence,
    ];

    /// Row label in the ablation table.
    pub fn ablation_label(self) -> &'static str {
        match self {
            PromptFamily::Language => "w/o P^L",
            PromptFamily::Property => "w/o P^P",
            PromptFamily::Saliency => "w/o P^S",
            PromptFamily::Confidence => "w/o P^C",
        }
    }
}

impl FromStr for PromptFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "language" => Ok(PromptFamily::Language),
            "property" => Ok(PromptFamily::Property),
            "saliency" => Ok(PromptFamily::Saliency),
            "confidence" => Ok(PromptFamily::Confidence),
            other => Err(Error::InvalidProfile(format!(
                "unknown prompt family `{other}`"
            ))),
        }
    }
}

fn default_k_top() -> usize {
    5
}
fn default_n_neighbors() -> usize {
    400
}
fn default_resolution() -> usize {
    400
}
// Detector thresholds are not documented for the reference detector; these
// are the common grounding-detector defaults.
fn default_box_floor() -> f64 {
    0.3
}
fn default_text_floor() -> f64 {
    0.25
}
fn default_theta_iou() -> f64 {
    0.9
}
fn default_theta_area() -> f64 {
    0.3
}
fn default_agnostic() -> Vec<String> {
    vec!["anomaly".into(), "defect".into()]
}

/// Every expert-knowledge input the cascade consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptProfile {
    #[serde(default = "default_agnostic")]
    pub class_agnostic_prompts: Vec<String>,
    #[serde(default)]
    pub class_specific_prompts: Vec<String>,
    pub object_prompt: String,
    #[serde(default = "default_theta_iou")]
    pub theta_iou: f64,
    #[serde(default = "default_theta_area")]
    pub theta_area: f64,
    #[serde(default)]
    pub overlap_measure: OverlapMeasure,
    #[serde(default = "default_k_top")]
    pub k_top: usize,
    #[serde(default = "default_n_neighbors")]
    pub n_neighbors: usize,
    #[serde(default = "default_resolution")]
    pub working_resolution: usize,
    #[serde(default = "default_box_floor")]
    pub box_score_floor: f64,
    #[serde(default = "default_text_floor")]
    pub text_score_floor: f64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub ablation_drops: BTreeSet<PromptFamily>,
}

impl PromptProfile {
    pub fn new(object_prompt: impl Into<String>) -> Self {
        PromptProfile {
            class_agnostic_prompts: default_agnostic(),
            class_specific_prompts: Vec::new(),
            object_prompt: object_prompt.into(),
            theta_iou: default_theta_iou(),
            theta_area: default_theta_area(),
            overlap_measure: OverlapMeasure::default(),
            k_top: default_k_top(),
            n_neighbors: default_n_neighbors(),
            working_resolution: default_resolution(),
            box_score_floor: default_box_floor(),
            text_score_floor: default_text_floor(),
            mode: Mode::SaaPlus,
            ablation_drops: BTreeSet::new(),
        }
    }

    pub fn drops(&self, family: PromptFamily) -> bool {
        self.ablation_drops.contains(&family)
    }

    pub fn with_drop(mut self, family: PromptFamily) -> Self {
        self.ablation_drops.insert(family);
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Language prompts queried against the generator: `T_a ∪ T_s`, in
    /// order, duplicates removed; the naive prompt alone when language
    /// prompting is ablated.
    pub fn language_prompts(&self) -> Vec<String> {
        if self.drops(PromptFamily::Language) {
            return vec![NAIVE_PROMPT.to_string()];
        }
        let mut seen = BTreeSet::new();
        self.class_agnostic_prompts
            .iter()
            .chain(&self.class_specific_prompts)
            .map(|p| p.trim().to_lowercase())
            .filter(|p| !p.is_empty() && seen.insert(p.clone()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProfile(msg));
        if !(0.0..=1.0).contains(&self.theta_iou) {
            return bad(format!("theta_iou {} outside [0, 1]", self.theta_iou));
        }
        if !(self.theta_area > 0.0 && self.theta_area <= 1.0) {
            return bad(format!("theta_area {} outside (0, 1]", self.theta_area));
        }
        if self.k_top == 0 {
            return bad("k_top must be at least 1".into());
        }
        if self.n_neighbors == 0 {
            return bad("n_neighbors must be at least 1".into());
        }
        if self.working_resolution < 2 {
            return bad("working_resolution must be at least 2".into());
        }
        for (name, v) in [
            ("box_score_floor", self.box_score_floor),
            ("text_score_floor", self.text_score_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !self.drops(PromptFamily::Language) && self.language_prompts().is_empty() {
            return bad("language prompts are empty".into());
        }
        if !self.drops(PromptFamily::Property) && self.object_prompt.trim().is_empty() {
            return bad("object_prompt is empty".into());
        }
        Ok(())
    }

    /// Stable hex digest of the canonical JSON form.
    pub fn hash_hex(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("profile serializes");
        hex::encode(Sha256::digest(&canonical))[..16].to_string()
    }
}

/// Per-category adjustments layered over the document's base profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_agnostic_prompts: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_specific_prompts: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_area: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_top: Option<usize>,
}

/// Persisted, schema-versioned profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDocument {
    pub schema_version: u32,
    pub id: String,
    pub display_name: String,
    /// Optimistic-concurrency counter; each accepted write carries the
    /// previous version plus one.
    #[serde(default = "one")]
    pub version: u64,
    pub profile: PromptProfile,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub categories: BTreeMap<String, ProfileOverride>,
}

fn one() -> u64 {
    1
}

impl ProfileDocument {
    pub fn new(id: impl Into<String>, display_name: impl Into<String>, profile: PromptProfile) -> Self {
        ProfileDocument {
            schema_version: PROFILE_SCHEMA_VERSION,
            id: id.into(),
            display_name: display_name.into(),
            version: 1,
            profile,
            categories: BTreeMap::new(),
        }
    }

    /// Parses either a full document or a bare profile.
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("profile").is_some() {
            let doc: ProfileDocument = serde_json::from_value(value)?;
            if doc.schema_version != PROFILE_SCHEMA_VERSION {
                return Err(Error::InvalidProfile(format!(
                    "unsupported schema_version {}",
                    doc.schema_version
                )));
            }
            doc.validate()?;
            Ok(doc)
        } else {
            let profile: PromptProfile = serde_json::from_value(value)?;
            profile.validate()?;
            Ok(ProfileDocument::new("default", "default", profile))
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !is_safe_id(&self.id) {
            return Err(Error::InvalidProfile(format!("bad profile id `{}`", self.id)));
        }
        self.profile.validate()?;
        for category in self.categories.keys() {
            self.profile_for(category).validate()?;
        }
        Ok(())
    }

    /// Effective profile for one dataset category.
    pub fn profile_for(&self, category: &str) -> PromptProfile {
        let mut p = self.profile.clone();
        if let Some(o) = self.categories.get(category) {
            if let Some(v) = &o.object_prompt {
                p.object_prompt = v.clone();
            }
            if let Some(v) = &o.class_agnostic_prompts {
                p.class_agnostic_prompts = v.clone();
            }
            if let Some(v) = &o.class_specific_prompts {
                p.class_specific_prompts = v.clone();
            }
            if let Some(v) = o.theta_iou {
                p.theta_iou = v;
            }
            if let Some(v) = o.theta_area {
                p.theta_area = v;
            }
            if let Some(v) = o.k_top {
                p.k_top = v;
            }
        }
        p
    }

    /// Copy with mode and drops replaced everywhere they apply.
    pub fn with_variant(&self, mode: Mode, drops: &BTreeSet<PromptFamily>) -> Self {
        let mut doc = self.clone();
        doc.profile.mode = mode;
        doc.profile.ablation_drops = drops.clone();
        doc
    }

    pub fn hash_hex(&self) -> String {
        let canonical = serde_json::to_vec(&(&self.profile, &self.categories)).expect("serializes");
        hex::encode(Sha256::digest(&canonical))[..16].to_string()
    }
}

/// Ids double as file names: `[A-Za-z0-9_.-]+`, not starting with a dot.
pub fn is_safe_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}
