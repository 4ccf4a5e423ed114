//! The detection → refinement cascade and its prompt regularizers.
//!
//! Baseline (`saa`): one naive prompt, every refined region fused with its
//! raw detector score. Full (`saa_plus`): class-agnostic plus class-specific
//! prompts, property filtering against the located object, saliency
//! rescoring, top-K selection, then fusion. Each regularizer can be dropped
//! independently through the profile.

pub mod trace;

use std::cmp::Ordering;
use std::time::Instant;

use log::debug;

use crate::backends::{self, Backends, DetectionThresholds};
use crate::error::{Error, Result};
use crate::geometry::{mask_area, overlap, rasterize_box, Mask, OverlapMeasure, RegionCandidate, StageTag};
use crate::image::ImageRecord;
use crate::maps::AnomalyMap;
use crate::profile::{Mode, PromptFamily, PromptProfile, NAIVE_PROMPT};
use crate::saliency::{saliency_map, saliency_prompts, upsample_saliency};

pub use trace::{PipelineTrace, SaliencyGrid, StageName, StageSnapshot, StageTiming};

/// Below this detector score the object is treated as not found.
pub const OBJECT_SCORE_FLOOR: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Regions that entered fusion.
    pub candidates: Vec<RegionCandidate>,
    pub map: AnomalyMap,
    pub trace: PipelineTrace,
}

/// Keeps candidates lying (mostly) inside the object and no larger than a
/// fraction of it. Order and scores are preserved.
pub fn property_filter(
    candidates: &[RegionCandidate],
    object_mask: &Mask,
    theta_iou: f64,
    theta_area: f64,
    measure: OverlapMeasure,
) -> Result<Vec<RegionCandidate>> {
    let max_area = theta_area * mask_area(object_mask) as f64;
    let mut kept = Vec::new();
    for c in candidates {
        let ov = overlap(&c.mask, object_mask, measure)?;
        if ov >= theta_iou && c.mask.area() as f64 <= max_area {
            kept.push(c.clone().with_tag(StageTag::Filtered));
        }
    }
    Ok(kept)
}

/// Multiplies each score by its saliency prompt.
pub fn rescore(candidates: &[RegionCandidate], prompts: &[f64]) -> Result<Vec<RegionCandidate>> {
    if candidates.len() != prompts.len() {
        return Err(Error::LengthMismatch {
            left: candidates.len(),
            right: prompts.len(),
        });
    }
    Ok(candidates
        .iter()
        .zip(prompts)
        .map(|(c, p)| {
            let score = c.score * p;
            c.clone().with_score(score).with_tag(StageTag::Rescored)
        })
        .collect())
}

/// The `min(k, n)` highest-scoring candidates, score-descending; equal
/// scores keep input order.
pub fn select_top_k(candidates: &[RegionCandidate], k: usize) -> Vec<RegionCandidate> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .score
            .partial_cmp(&candidates[a].score)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(k)
        .map(|i| candidates[i].clone().with_tag(StageTag::Selected))
        .collect()
}

/// Per-pixel mean score of the covering regions; zero where none covers.
pub fn fuse(candidates: &[RegionCandidate], height: usize, width: usize) -> Result<AnomalyMap> {
    let n = height * width;
    let mut sum = vec![0.0f64; n];
    let mut count = vec![0u32; n];
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for c in candidates {
        if c.mask.shape() != (height, width) {
            return Err(Error::ShapeMismatch {
                expected: (height, width),
                got: c.mask.shape(),
            });
        }
        for (i, _) in c.mask.bits().iter().enumerate().filter(|(_, b)| **b) {
            sum[i] += c.score;
            count[i] += 1;
            lo[i] = lo[i].min(c.score);
            hi[i] = hi[i].max(c.score);
        }
    }
    let values = (0..n)
        .map(|i| match count[i] {
            0 => 0.0,
            k => (sum[i] / k as f64).clamp(lo[i], hi[i]),
        })
        .collect();
    AnomalyMap::from_values(height, width, values)
}

/// Merges candidates with identical mask and phrase, keeping the first
/// position and the highest score.
pub fn dedup_candidates(candidates: Vec<RegionCandidate>) -> Vec<RegionCandidate> {
    let mut out: Vec<RegionCandidate> = Vec::with_capacity(candidates.len());
    for c in candidates {
        match out.iter_mut().find(|o| o.phrase == c.phrase && o.mask == c.mask) {
            Some(existing) => existing.score = existing.score.max(c.score),
            None => out.push(c),
        }
    }
    out
}

fn thresholds(profile: &PromptProfile) -> DetectionThresholds {
    DetectionThresholds {
        box_threshold: profile.box_score_floor,
        text_threshold: profile.text_score_floor,
    }
}

/// Mask of the best refined detection for `object_prompt`, or the whole
/// image when nothing scores at least [`OBJECT_SCORE_FLOOR`].
pub fn locate_object(
    image: &ImageRecord,
    object_prompt: &str,
    backends: &Backends,
    thresholds: DetectionThresholds,
) -> Result<Mask> {
    let full = || Mask::full(image.height(), image.width());
    let prompt = object_prompt.trim().to_lowercase();
    if prompt.is_empty() {
        return Ok(full());
    }
    let boxes = backends::generate(backends.generator.as_ref(), image, &[prompt], thresholds)?;
    let regions = backends::refine(backends.refiner.as_ref(), image, &boxes)?;
    let best = regions.into_iter().fold(None::<RegionCandidate>, |best, r| match best {
        Some(b) if b.score >= r.score => Some(b),
        _ => Some(r),
    });
    Ok(match best {
        Some(r) if r.score >= OBJECT_SCORE_FLOOR => r.mask,
        _ => full(),
    })
}

struct Recorder {
    trace: PipelineTrace,
    clock: Instant,
}

impl Recorder {
    fn new(image: &ImageRecord, mode: Mode, prompts: &[String]) -> Self {
        Recorder {
            trace: PipelineTrace::new(&image.id, mode, prompts.to_vec()),
            clock: Instant::now(),
        }
    }

    fn record(&mut self, stage: StageName, skipped: bool, candidates: &[RegionCandidate]) {
        let ms = self.clock.elapsed().as_secs_f64() * 1e3;
        self.clock = Instant::now();
        self.trace.timings.push(StageTiming { stage, ms });
        self.trace.stages.push(StageSnapshot {
            stage,
            skipped,
            candidates: candidates.to_vec(),
        });
    }

    fn finish(mut self, fused: Vec<RegionCandidate>, map: AnomalyMap) -> PipelineOutput {
        self.record(StageName::Fused, false, &fused);
        self.trace.map_max = map.max();
        self.trace.covered_pixels = map.values().iter().filter(|&&v| v > 0.0).count();
        debug!(
            "image {}: {} regions fused, max score {:.4}",
            self.trace.image_id,
            fused.len(),
            self.trace.map_max
        );
        PipelineOutput {
            candidates: fused,
            map,
            trace: self.trace,
        }
    }
}

/// Queries each prompt separately, refines every box, merges duplicates.
fn generate_and_refine(
    image: &ImageRecord,
    prompts: &[String],
    backends: &Backends,
    thresholds: DetectionThresholds,
    rec: &mut Recorder,
) -> Result<Vec<RegionCandidate>> {
    let mut boxes = Vec::new();
    for prompt in prompts {
        boxes.extend(backends::generate(
            backends.generator.as_ref(),
            image,
            std::slice::from_ref(prompt),
            thresholds,
        )?);
    }
    let generated: Vec<RegionCandidate> = boxes
        .iter()
        .map(|b| RegionCandidate {
            phrase: b.phrase().to_string(),
            score: b.score(),
            stage_tag: StageTag::Generated,
            mask: rasterize_box(b, image.height(), image.width()),
        })
        .collect();
    rec.record(StageName::Generated, false, &generated);
    let refined = dedup_candidates(backends::refine(backends.refiner.as_ref(), image, &boxes)?);
    rec.record(StageName::Refined, false, &refined);
    Ok(refined)
}

fn passthrough(candidates: &[RegionCandidate], tag: StageTag) -> Vec<RegionCandidate> {
    candidates.iter().map(|c| c.clone().with_tag(tag)).collect()
}

/// Baseline cascade with a single naive prompt.
pub fn run_saa(
    image: &ImageRecord,
    naive_prompt: &str,
    backends: &Backends,
    thresholds: DetectionThresholds,
) -> Result<PipelineOutput> {
    let prompts = vec![naive_prompt.trim().to_lowercase()];
    let mut rec = Recorder::new(image, Mode::Saa, &prompts);
    let refined = generate_and_refine(image, &prompts, backends, thresholds, &mut rec)?;
    let filtered = passthrough(&refined, StageTag::Filtered);
    rec.record(StageName::Filtered, true, &filtered);
    let rescored = passthrough(&filtered, StageTag::Rescored);
    rec.record(StageName::Rescored, true, &rescored);
    let selected = passthrough(&rescored, StageTag::Selected);
    rec.record(StageName::Selected, true, &selected);
    let map = fuse(&selected, image.height(), image.width())?;
    Ok(rec.finish(selected, map))
}

/// Full multimodal-prompt cascade, honouring `profile.ablation_drops`.
pub fn run_saa_plus(image: &ImageRecord, profile: &PromptProfile, backends: &Backends) -> Result<PipelineOutput> {
    let thresholds = thresholds(profile);
    let prompts = profile.language_prompts();
    let mut rec = Recorder::new(image, Mode::SaaPlus, &prompts);
    let refined = generate_and_refine(image, &prompts, backends, thresholds, &mut rec)?;

    let filtered = if profile.drops(PromptFamily::Property) {
        let f = passthrough(&refined, StageTag::Filtered);
        rec.record(StageName::Filtered, true, &f);
        f
    } else {
        let object = locate_object(image, &profile.object_prompt, backends, thresholds)?;
        let f = property_filter(
            &refined,
            &object,
            profile.theta_iou,
            profile.theta_area,
            profile.overlap_measure,
        )?;
        rec.trace.object_mask = Some(object);
        rec.record(StageName::Filtered, false, &f);
        f
    };

    let rescored = if profile.drops(PromptFamily::Saliency) {
        let r = rescore(&filtered, &vec![1.0; filtered.len()])?;
        rec.record(StageName::Rescored, true, &r);
        r
    } else {
        let grid = backends::extract_features(backends.features.as_ref(), image)?;
        let coarse = saliency_map(&grid, profile.n_neighbors)?;
        let fine = upsample_saliency(&coarse, image.height(), image.width())?;
        let prompts = saliency_prompts(&fine, &filtered)?;
        let r = rescore(&filtered, &prompts)?;
        rec.trace.saliency = Some(SaliencyGrid::from(&coarse));
        rec.trace.saliency_prompts = prompts;
        rec.record(StageName::Rescored, false, &r);
        r
    };

    let selected = if profile.drops(PromptFamily::Confidence) {
        let s = passthrough(&rescored, StageTag::Selected);
        rec.record(StageName::Selected, true, &s);
        s
    } else {
        let s = select_top_k(&rescored, profile.k_top);
        rec.record(StageName::Selected, false, &s);
        s
    };

    let map = fuse(&selected, image.height(), image.width())?;
    Ok(rec.finish(selected, map))
}

/// Dispatches on `profile.mode`.
pub fn run(image: &ImageRecord, profile: &PromptProfile, backends: &Backends) -> Result<PipelineOutput> {
    match profile.mode {
        Mode::Saa => run_saa(image, NAIVE_PROMPT, backends, thresholds(profile)),
        Mode::SaaPlus => run_saa_plus(image, profile, backends),
    }
}
