use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use saa_core::eval::{self, layouts, load_manifest, DatasetManifest, EvalReport, RunMetadata};
use saa_core::profile::PromptFamily;
use saa_core::{desk, AnomalyMap, Backends, Mode, ProfileDocument};
use serde::{Deserialize, Serialize};

use crate::config::{self, BackendFlags};
use crate::failure::{CliResult, Failure};

pub const SUMMARY_FILE: &str = "run_summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub id: String,
    pub category: String,
    pub map_max: f64,
    pub covered_pixels: usize,
    pub stage_counts: BTreeMap<String, usize>,
}

/// Written next to the per-image outputs of `run`. Contains no timestamps
/// or timings so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub mode: Mode,
    pub profile_id: String,
    pub profile_hash: String,
    pub ablation_drops: Vec<PromptFamily>,
    pub working_resolution: usize,
    /// PNG maps are scaled so this value is white.
    pub scale_max: f64,
    pub images: Vec<ImageSummary>,
}

pub fn load_dataset(path: &Path) -> CliResult<DatasetManifest> {
    let m = load_manifest(path).map_err(|e| Failure::config(format!("--manifest {}: {e}", path.display())))?;
    if m.entries.is_empty() {
        return Err(Failure::config(format!("--manifest {}: no entries", path.display())));
    }
    Ok(m)
}

pub fn load_profile(path: &Path) -> CliResult<ProfileDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("--profile {}: {e}", path.display())))?;
    ProfileDocument::parse(&text).map_err(|e| Failure::config(format!("--profile {}: {e}", path.display())))
}

pub fn backends_for(flags: &BackendFlags, manifest: &Path) -> CliResult<Backends> {
    config::build(&config::resolve(flags, &config::process_env(), manifest)?)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::config(format!("{}: {e}", dir.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Dataset-wide PNG scale: the largest map value, or 1 for all-zero runs.
pub fn png_scale(maps: impl IntoIterator<Item = f64>) -> f64 {
    let m = maps.into_iter().fold(0.0f64, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

pub fn run(
    manifest_path: &Path,
    doc: &ProfileDocument,
    mode: Mode,
    out: &Path,
    backends: &Backends,
) -> CliResult<RunSummary> {
    let manifest = load_dataset(manifest_path)?;
    let outputs = eval::predict_all(&manifest, doc, mode, backends)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    create_dir(out)?;
    let scale_max = png_scale(outputs.iter().map(|o| o.map.max()));
    let mut images = Vec::with_capacity(outputs.len());
    for (entry, o) in manifest.entries.iter().zip(&outputs) {
        write(&out.join(format!("{}.bin", entry.id)), o.map.to_bytes())?;
        write(&out.join(format!("{}.png", entry.id)), o.map.to_png16(scale_max)?)?;
        write(&out.join(format!("{}.trace.json", entry.id)), o.trace.to_json())?;
        images.push(ImageSummary {
            id: entry.id.clone(),
            category: entry.category.clone(),
            map_max: o.trace.map_max,
            covered_pixels: o.trace.covered_pixels,
            stage_counts: o.trace.stage_counts(),
        });
    }
    let summary = RunSummary {
        dataset: manifest.dataset.clone(),
        mode,
        profile_id: doc.id.clone(),
        profile_hash: doc.hash_hex(),
        ablation_drops: doc.profile.ablation_drops.iter().copied().collect(),
        working_resolution: doc.profile.working_resolution,
        scale_max,
        images,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(&out.join(SUMMARY_FILE), json + "\n")?;
    Ok(summary)
}

/// Writes `out` (JSON) plus `.txt` and `.csv` siblings.
fn write_report_files(out: &Path, json: String, table: String, csv: String) -> CliResult<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write(out, json + "\n")?;
    write(&out.with_extension("txt"), table)?;
    write(&out.with_extension("csv"), csv)
}

pub fn eval(pred: &Path, manifest_path: &Path, out: &Path) -> CliResult<EvalReport> {
    let manifest = load_dataset(manifest_path)?;
    let missing: Vec<&str> = manifest
        .entries
        .iter()
        .filter(|e| !pred.join(format!("{}.bin", e.id)).is_file())
        .map(|e| e.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Failure::config(format!(
            "--pred {}: missing predictions for {} image(s): {}",
            pred.display(),
            missing.len(),
            missing.join(", ")
        )));
    }
    let summary: Option<RunSummary> = std::fs::read_to_string(pred.join(SUMMARY_FILE))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    let (metadata, resolution) = match &summary {
        Some(s) => (
            RunMetadata {
                profile_hash: s.profile_hash.clone(),
                mode: s.mode,
                ablation_drops: s.ablation_drops.clone(),
            },
            s.working_resolution,
        ),
        None => {
            log::warn!("{} has no {SUMMARY_FILE}; run metadata unknown", pred.display());
            (
                RunMetadata {
                    profile_hash: "unknown".into(),
                    mode: Mode::SaaPlus,
                    ablation_drops: Vec::new(),
                },
                saa_core::PromptProfile::new("object").working_resolution,
            )
        }
    };
    let report = eval::evaluate_with(&manifest, resolution, metadata, |e| {
        let path = pred.join(format!("{}.bin", e.id));
        let bytes = std::fs::read(&path).map_err(|err| saa_core::Error::io(&path, err))?;
        AnomalyMap::from_bytes(&bytes)
    })?;
    write_report_files(out, report.to_json(), report.to_table(), report.to_csv())?;
    Ok(report)
}

pub fn ablate(manifest_path: &Path, doc: &ProfileDocument, out: &Path, backends: &Backends) -> CliResult<eval::AblationTable> {
    let manifest = load_dataset(manifest_path)?;
    let table = eval::run_ablations(&manifest, doc, backends);
    write_report_files(out, table.to_json(), table.to_table(), table.to_csv())?;
    let failed: Vec<&eval::AblationRow> = table.rows.iter().filter(|r| r.error.is_some()).collect();
    if let Some(first) = failed.first() {
        let msg = format!("{} ablation row(s) failed; first: {}: {}", failed.len(), first.label, first.error.as_deref().unwrap_or(""));
        return Err(if failed.iter().any(|r| r.backend_failure) {
            Failure::Backend(msg)
        } else {
            Failure::Config(msg)
        });
    }
    Ok(table)
}

pub fn make_desk(out: &Path) -> CliResult<()> {
    create_dir(out)?;
    desk::generate().write(out).map_err(Failure::from)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Mvtec,
    Visa,
}

pub fn manifest(layout: Layout, root: &Path, dataset: &str, out: &Path) -> CliResult<usize> {
    let root: PathBuf = root
        .canonicalize()
        .map_err(|e| Failure::config(format!("--root {}: {e}", root.display())))?;
    let doc = match layout {
        Layout::Mvtec => layouts::mvtec_manifest(&root, dataset),
        Layout::Visa => layouts::visa_manifest(&root, dataset),
    }?;
    if doc.entries.is_empty() {
        return Err(Failure::config(format!("--root {}: no test images found", root.display())));
    }
    doc.write(out)?;
    Ok(doc.entries.len())
}
