//! Manifest builders for the two common industrial-inspection layouts.
//!
//! MVTec-AD style:
//! `<root>/<category>/test/<defect_type>/<name>.png` with masks at
//! `<root>/<category>/ground_truth/<defect_type>/<name>_mask.png`; the
//! `good` defect type has no masks.
//!
//! VisA style:
//! `<root>/<category>/Data/Images/{Anomaly,Normal}/<name>.<ext>` with masks at
//! `<root>/<category>/Data/Masks/Anomaly/<name>.png`.

use std::path::{Path, PathBuf};

use super::manifest::{ManifestDocument, ManifestEntry, Split, NO_GROUND_TRUTH};
use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "bmp", "tif"];

fn sorted_dir(path: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

fn is_image(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

fn name(p: &Path) -> String {
    p.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '.') { c } else { '_' })
        .collect()
}

fn rel(root: &Path, p: &Path) -> PathBuf {
    p.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf())
}

pub fn mvtec_manifest(root: &Path, dataset: &str) -> Result<ManifestDocument> {
    let mut entries = Vec::new();
    for cat_dir in sorted_dir(root)?.into_iter().filter(|p| p.join("test").is_dir()) {
        let category = name(&cat_dir);
        for defect_dir in sorted_dir(&cat_dir.join("test"))?.into_iter().filter(|p| p.is_dir()) {
            let defect = name(&defect_dir);
            for img in sorted_dir(&defect_dir)?.into_iter().filter(|p| is_image(p)) {
                let ground_truth = if defect == "good" {
                    NO_GROUND_TRUTH.to_string()
                } else {
                    let mask = cat_dir
                        .join("ground_truth")
                        .join(&defect)
                        .join(format!("{}_mask.png", stem(&img)));
                    if !mask.is_file() {
                        return Err(Error::MissingFile(mask));
                    }
                    rel(root, &mask).to_string_lossy().into_owned()
                };
                entries.push(ManifestEntry {
                    id: sanitize(&format!("{category}_{defect}_{}", stem(&img))),
                    category: category.clone(),
                    split: Split::Test,
                    image: rel(root, &img),
                    ground_truth,
                });
            }
        }
    }
    Ok(ManifestDocument::new(dataset, root, entries))
}

pub fn visa_manifest(root: &Path, dataset: &str) -> Result<ManifestDocument> {
    let mut entries = Vec::new();
    for cat_dir in sorted_dir(root)?
        .into_iter()
        .filter(|p| p.join("Data").join("Images").is_dir())
    {
        let category = name(&cat_dir);
        let images = cat_dir.join("Data").join("Images");
        for (kind, anomalous) in [("Anomaly", true), ("Normal", false)] {
            let dir = images.join(kind);
            if !dir.is_dir() {
                continue;
            }
            for img in sorted_dir(&dir)?.into_iter().filter(|p| is_image(p)) {
                let ground_truth = if anomalous {
                    let mask = cat_dir
                        .join("Data")
                        .join("Masks")
                        .join("Anomaly")
                        .join(format!("{}.png", stem(&img)));
                    if !mask.is_file() {
                        return Err(Error::MissingFile(mask));
                    }
                    rel(root, &mask).to_string_lossy().into_owned()
                } else {
                    NO_GROUND_TRUTH.to_string()
                };
                entries.push(ManifestEntry {
                    id: sanitize(&format!("{category}_{}_{}", kind.to_lowercase(), stem(&img))),
                    category: category.clone(),
                    split: Split::Test,
                    image: rel(root, &img),
                    ground_truth,
                });
            }
        }
    }
    Ok(ManifestDocument::new(dataset, root, entries))
}
