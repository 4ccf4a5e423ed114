//! Dataset evaluation and the prompt-family ablation sweep.

use std::collections::BTreeSet;

use rayon::prelude::*;

use super::manifest::{DatasetManifest, ManifestEntry};
use super::metric::PixelPool;
use super::report::{AblationRow, AblationTable, CategoryScore, EvalReport, RunMetadata, FULL_MODEL_LABEL};
use crate::backends::Backends;
use crate::error::{Error, Result};
use crate::maps::AnomalyMap;
use crate::pipeline;
use crate::profile::{Mode, ProfileDocument, PromptFamily};

/// Pools one category's pixels from maps produced by `predict`.
///
/// Predictions run in parallel; the pool is filled in manifest order.
pub fn score_category<F>(
    manifest: &DatasetManifest,
    category: &str,
    resolution: usize,
    predict: &F,
) -> Result<CategoryScore>
where
    F: Fn(&ManifestEntry) -> Result<AnomalyMap> + Sync,
{
    let entries: Vec<&ManifestEntry> = manifest.entries_in(category).collect();
    if entries.is_empty() {
        return Err(Error::ManifestSchema(format!("no entries for category `{category}`")));
    }
    let results: Vec<Result<(AnomalyMap, crate::geometry::Mask)>> = entries
        .par_iter()
        .map(|e| {
            let map = predict(e).map_err(|err| err.in_image(&e.id))?;
            let gt = manifest
                .load_ground_truth(e, resolution)
                .map_err(|err| err.in_image(&e.id))?;
            Ok((map, gt))
        })
        .collect();
    let mut pool = PixelPool::new();
    for (r, e) in results.into_iter().zip(&entries) {
        let (map, gt) = r?;
        pool.add(&map, &gt).map_err(|err| err.in_image(&e.id))?;
    }
    let best = pool.max_f1().map_err(|e| e.in_category(category))?;
    Ok(CategoryScore {
        category: category.to_string(),
        images: entries.len(),
        max_f1_pixel: best.score,
        threshold: best.threshold,
        positive_pixels: best.positive_pixels,
        total_pixels: best.total_pixels,
    })
}

/// Scores every category with maps from `predict`.
pub fn evaluate_with<F>(
    manifest: &DatasetManifest,
    resolution: usize,
    metadata: RunMetadata,
    predict: F,
) -> Result<EvalReport>
where
    F: Fn(&ManifestEntry) -> Result<AnomalyMap> + Sync,
{
    let rows = manifest
        .categories()
        .iter()
        .map(|c| score_category(manifest, c, resolution, &predict))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(&manifest.dataset, rows, metadata))
}

pub fn metadata_for(doc: &ProfileDocument, mode: Mode) -> RunMetadata {
    RunMetadata {
        profile_hash: doc.hash_hex(),
        mode,
        ablation_drops: doc.profile.ablation_drops.iter().copied().collect(),
    }
}

/// Runs the cascade on one image of the manifest.
pub fn predict_entry(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    doc: &ProfileDocument,
    mode: Mode,
    backends: &Backends,
) -> Result<pipeline::PipelineOutput> {
    let profile = doc.profile_for(&entry.category).with_mode(mode);
    let image = manifest.load_image(entry, profile.working_resolution)?;
    pipeline::run(&image, &profile, backends)
}

/// Runs every manifest entry, in parallel, returning results in manifest
/// order.
pub fn predict_all(
    manifest: &DatasetManifest,
    doc: &ProfileDocument,
    mode: Mode,
    backends: &Backends,
) -> Vec<Result<pipeline::PipelineOutput>> {
    manifest
        .entries
        .par_iter()
        .map(|e| predict_entry(manifest, e, doc, mode, backends).map_err(|err| err.in_image(&e.id)))
        .collect()
}

/// Max-F1-pixel for one category under `doc` and `mode`.
pub fn evaluate_category(
    manifest: &DatasetManifest,
    category: &str,
    doc: &ProfileDocument,
    backends: &Backends,
    mode: Mode,
) -> Result<CategoryScore> {
    let resolution = doc.profile.working_resolution;
    score_category(manifest, category, resolution, &|e: &ManifestEntry| {
        predict_entry(manifest, e, doc, mode, backends).map(|o| o.map)
    })
}

pub fn evaluate(
    manifest: &DatasetManifest,
    doc: &ProfileDocument,
    backends: &Backends,
    mode: Mode,
) -> Result<EvalReport> {
    let resolution = doc.profile.working_resolution;
    evaluate_with(manifest, resolution, metadata_for(doc, mode), |e| {
        predict_entry(manifest, e, doc, mode, backends).map(|o| o.map)
    })
}

/// One row per single-family drop, then the full model. A failing row
/// records its error; the others still run.
pub fn run_ablations(manifest: &DatasetManifest, doc: &ProfileDocument, backends: &Backends) -> AblationTable {
    let variants = PromptFamily::ALL
        .iter()
        .map(|&f| (f.ablation_label().to_string(), Some(f)))
        .chain([(FULL_MODEL_LABEL.to_string(), None)]);
    let rows = variants
        .map(|(label, dropped)| {
            let drops: BTreeSet<PromptFamily> = dropped.into_iter().collect();
            let variant = doc.with_variant(Mode::SaaPlus, &drops);
            match evaluate(manifest, &variant, backends, Mode::SaaPlus) {
                Ok(report) => AblationRow {
                    label,
                    dropped,
                    report: Some(report),
                    error: None,
                    backend_failure: false,
                },
                Err(e) => AblationRow {
                    label,
                    dropped,
                    report: None,
                    error: Some(e.to_string()),
                    backend_failure: e.is_backend(),
                },
            }
        })
        .collect();
    AblationTable {
        dataset: manifest.dataset.clone(),
        rows,
    }
}
