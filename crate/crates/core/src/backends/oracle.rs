//! Fixture-driven stand-ins for the detector and the segmenter.
//!
//! A fixture lists, per image id, the regions a detector "would" report:
//! phrase, box, confidence and optionally a refined mask. A fixture entry
//! answers a query prompt when either text contains the other
//! (case-insensitive).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{BackendDescriptor, DetectionThresholds, Generator, Refiner};
use crate::error::{BackendError, Error, Result};
use crate::geometry::{rasterize_box, BoxCandidate, Mask};
use crate::image::ImageRecord;

pub const FIXTURE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub phrase: String,
    #[serde(rename = "box")]
    pub bbox: [u32; 4],
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Mask>,
}

impl FixtureEntry {
    pub fn matches(&self, prompt: &str) -> bool {
        let prompt = prompt.trim().to_lowercase();
        !prompt.is_empty() && (self.phrase.contains(&prompt) || prompt.contains(&self.phrase))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleFixture {
    pub schema_version: u32,
    pub images: BTreeMap<String, Vec<FixtureEntry>>,
}

impl OracleFixture {
    pub fn new() -> Self {
        OracleFixture {
            schema_version: FIXTURE_SCHEMA_VERSION,
            images: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let fixture: OracleFixture = serde_json::from_str(&text)
            .map_err(|e| Error::Fixture(format!("{}: {e}", path.display())))?;
        fixture.validate()?;
        Ok(fixture)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixture serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != FIXTURE_SCHEMA_VERSION {
            return Err(Error::Fixture(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        for (id, entries) in &self.images {
            for e in entries {
                let [x0, y0, x1, y1] = e.bbox;
                if e.phrase.is_empty() || e.phrase != e.phrase.to_lowercase() {
                    return Err(Error::Fixture(format!(
                        "{id}: phrase `{}` must be nonempty lowercase",
                        e.phrase
                    )));
                }
                if !(x0 < x1 && y0 < y1) {
                    return Err(Error::Fixture(format!("{id}: degenerate box {:?}", e.bbox)));
                }
                if !(0.0..=1.0).contains(&e.score) {
                    return Err(Error::Fixture(format!("{id}: score {} outside [0, 1]", e.score)));
                }
                if let Some(m) = &e.mask {
                    if (x1 as usize) > m.width() || (y1 as usize) > m.height() {
                        return Err(Error::Fixture(format!(
                            "{id}: box {:?} exceeds its {}x{} mask",
                            e.bbox,
                            m.height(),
                            m.width()
                        )));
                    }
                    if m.is_empty() {
                        return Err(Error::Fixture(format!("{id}: empty mask for `{}`", e.phrase)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn entries(&self, image_id: &str) -> &[FixtureEntry] {
        self.images.get(image_id).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn descriptor(name: &str, semantics: &str) -> BackendDescriptor {
    BackendDescriptor {
        name: name.to_string(),
        max_prompt_length: None,
        score_semantics: semantics.to_string(),
        reentrant: true,
    }
}

pub struct OracleGenerator {
    fixture: Arc<OracleFixture>,
}

impl OracleGenerator {
    pub fn new(fixture: Arc<OracleFixture>) -> Self {
        OracleGenerator { fixture }
    }
}

impl Generator for OracleGenerator {
    fn descriptor(&self) -> BackendDescriptor {
        descriptor("oracle-generator", "fixture confidence in [0, 1]")
    }

    fn detect(
        &self,
        image: &ImageRecord,
        prompts: &[String],
        _thresholds: DetectionThresholds,
    ) -> Result<Vec<BoxCandidate>, BackendError> {
        self.fixture
            .entries(&image.id)
            .iter()
            .filter(|e| prompts.iter().any(|p| e.matches(p)))
            .map(|e| {
                let [x0, y0, x1, y1] = e.bbox;
                BoxCandidate::new(
                    (x0, y0, x1, y1),
                    e.score,
                    e.phrase.clone(),
                    image.height(),
                    image.width(),
                )
                .map_err(|err| BackendError::Contract(format!("fixture for {}: {err}", image.id)))
            })
            .collect()
    }
}

pub struct OracleRefiner {
    fixture: Arc<OracleFixture>,
}

impl OracleRefiner {
    pub fn new(fixture: Arc<OracleFixture>) -> Self {
        OracleRefiner { fixture }
    }
}

impl Refiner for OracleRefiner {
    fn descriptor(&self) -> BackendDescriptor {
        descriptor("oracle-refiner", "passes box scores through")
    }

    /// Fixture mask for a box reported by the fixture, else the box interior.
    /// Entries with the same phrase win over box-only matches.
    fn segment(&self, image: &ImageRecord, boxes: &[BoxCandidate]) -> Result<Vec<Mask>, BackendError> {
        let entries = self.fixture.entries(&image.id);
        Ok(boxes
            .iter()
            .map(|b| {
                let (x0, y0, x1, y1) = b.coords();
                let same_box = |e: &&FixtureEntry| e.bbox == [x0, y0, x1, y1];
                // Wire requests carry boxes without phrases.
                entries
                    .iter()
                    .filter(same_box)
                    .find(|e| e.phrase == b.phrase())
                    .or_else(|| entries.iter().find(same_box))
                    .and_then(|e| e.mask.clone())
                    .filter(|m| m.shape() == (image.height(), image.width()))
                    .unwrap_or_else(|| rasterize_box(b, image.height(), image.width()))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{generate, refine};

    fn image(id: &str) -> ImageRecord {
        ImageRecord::new(id, "c", 8, 8, vec![0.5; 8 * 8 * 3]).unwrap()
    }

    fn fixture() -> OracleFixture {
        let mut f = OracleFixture::new();
        let hole_mask = Mask::from_fn(8, 8, |x, y| x == 2 && (1..3).contains(&y));
        f.images.insert(
            "img".into(),
            vec![
                FixtureEntry {
                    phrase: "black hole".into(),
                    bbox: [1, 1, 4, 4],
                    score: 0.9,
                    mask: Some(hole_mask),
                },
                FixtureEntry {
                    phrase: "scratch".into(),
                    bbox: [5, 5, 7, 8],
                    score: 0.6,
                    mask: None,
                },
            ],
        );
        f
    }

    const T: DetectionThresholds = DetectionThresholds {
        box_threshold: 0.0,
        text_threshold: 0.0,
    };

    #[test]
    fn lookup_is_case_insensitive_substring() {
        let g = OracleGenerator::new(Arc::new(fixture()));
        let img = image("img");
        let hits = generate(&g, &img, &["Black Hole".into()], T).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].phrase(), "black hole");
        assert_eq!(hits[0].score(), 0.9);
        assert_eq!(generate(&g, &img, &["hole".into()], T).unwrap().len(), 1);
        assert!(generate(&g, &img, &["crack".into()], T).unwrap().is_empty());
        assert!(generate(&g, &image("other"), &["hole".into()], T).unwrap().is_empty());
    }

    #[test]
    fn score_floor_dominates() {
        let g = OracleGenerator::new(Arc::new(fixture()));
        let t = DetectionThresholds {
            box_threshold: 0.95,
            text_threshold: 0.0,
        };
        let prompts = vec!["black hole".to_string(), "scratch".to_string()];
        assert!(generate(&g, &image("img"), &prompts, t).unwrap().is_empty());
    }

    #[test]
    fn output_order_is_score_descending() {
        let g = OracleGenerator::new(Arc::new(fixture()));
        let prompts = vec!["scratch".to_string(), "black hole".to_string()];
        let hits = generate(&g, &image("img"), &prompts, T).unwrap();
        let scores: Vec<f64> = hits.iter().map(|b| b.score()).collect();
        assert_eq!(scores, vec![0.9, 0.6]);
    }

    #[test]
    fn refine_uses_fixture_mask_or_box() {
        let f = Arc::new(fixture());
        let g = OracleGenerator::new(f.clone());
        let r = OracleRefiner::new(f.clone());
        let img = image("img");
        let boxes = generate(&g, &img, &["black hole".into(), "scratch".into()], T).unwrap();
        let regions = refine(&r, &img, &boxes).unwrap();
        assert_eq!(regions.len(), 2);
        assert_eq!(&regions[0].mask, f.images["img"][0].mask.as_ref().unwrap());
        assert_eq!(regions[0].score, 0.9);
        assert_eq!(regions[1].mask, rasterize_box(&boxes[1], 8, 8));
        assert_eq!(regions[1].mask.area(), 6);
        assert!(refine(&r, &img, &[]).unwrap().is_empty());
    }

    #[test]
    fn validation_rejects_uppercase_and_bad_boxes() {
        let mut f = fixture();
        f.images.get_mut("img").unwrap()[1].phrase = "Scratch".into();
        assert!(f.validate().is_err());
        let mut f = fixture();
        f.images.get_mut("img").unwrap()[1].bbox = [5, 5, 5, 8];
        assert!(f.validate().is_err());
        fixture().validate().unwrap();
    }
}
