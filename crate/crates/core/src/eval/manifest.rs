//! Declarative dataset index.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "dataset": "mvtec",
//!   "root": ".",
//!   "entries": [
//!     {"id": "bottle_broken_large_000", "category": "bottle", "split": "test",
//!      "image": "bottle/test/broken_large/000.png",
//!      "ground_truth": "bottle/ground_truth/broken_large/000_mask.png"},
//!     {"id": "bottle_good_000", "category": "bottle", "split": "test",
//!      "image": "bottle/test/good/000.png", "ground_truth": "none"}
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against `root`, which itself resolves against the
//! manifest's directory. Boxes and masks anywhere in the tool use `(x, y)`
//! pixel coordinates, origin top-left, half-open boxes.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Mask;
use crate::image::{load_mask, ImageRecord};
use crate::profile::is_safe_id;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const NO_GROUND_TRUTH: &str = "none";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub category: String,
    #[serde(default)]
    pub split: Split,
    pub image: PathBuf,
    /// Mask path, or `"none"` for a defect-free image.
    pub ground_truth: String,
}

impl ManifestEntry {
    pub fn is_normal(&self) -> bool {
        self.ground_truth == NO_GROUND_TRUTH
    }
}

/// On-disk form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDocument {
    pub schema_version: u32,
    pub dataset: String,
    #[serde(default = "dot")]
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

fn dot() -> PathBuf {
    PathBuf::from(".")
}

impl ManifestDocument {
    pub fn new(dataset: impl Into<String>, root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Self {
        ManifestDocument {
            schema_version: MANIFEST_SCHEMA_VERSION,
            dataset: dataset.into(),
            root: root.into(),
            entries,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Validated manifest with resolved paths.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub dataset: String,
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

/// A test image and its ground truth at working resolution.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: ImageRecord,
    pub ground_truth: Mask,
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.is_file() {
        return Err(Error::ManifestNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: ManifestDocument =
        serde_json::from_str(&text).map_err(|e| Error::ManifestSchema(e.to_string()))?;
    if doc.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::ManifestSchema(format!(
            "unsupported schema_version {}",
            doc.schema_version
        )));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let manifest = DatasetManifest {
        dataset: doc.dataset,
        root: base.join(&doc.root),
        entries: doc.entries,
    };
    manifest.validate()?;
    Ok(manifest)
}

impl DatasetManifest {
    fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if !is_safe_id(&e.id) {
                return Err(Error::ManifestSchema(format!(
                    "id `{}` must match [A-Za-z0-9_.-]+",
                    e.id
                )));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::ManifestSchema(format!("duplicate id `{}`", e.id)));
            }
            if e.category.trim().is_empty() {
                return Err(Error::ManifestSchema(format!("{}: empty category", e.id)));
            }
            let image = self.resolve(&e.image);
            if !image.is_file() {
                return Err(Error::MissingFile(image));
            }
            let dims = image::image_dimensions(&image).map_err(|err| Error::UnreadableImage {
                path: image.clone(),
                message: err.to_string(),
            })?;
            if !e.is_normal() {
                let mask = self.resolve(Path::new(&e.ground_truth));
                if !mask.is_file() {
                    return Err(Error::MissingFile(mask));
                }
                let mask_dims = image::image_dimensions(&mask).map_err(|err| Error::UnreadableImage {
                    path: mask.clone(),
                    message: err.to_string(),
                })?;
                if mask_dims != dims {
                    log::debug!(
                        "{}: mask {:?} and image {:?} differ; both resized at load",
                        e.id,
                        mask_dims,
                        dims
                    );
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Categories in first-appearance order.
    pub fn categories(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.category.clone()))
            .map(|e| e.category.clone())
            .collect()
    }

    pub fn entries_in<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a ManifestEntry> + 'a {
        self.entries.iter().filter(move |e| e.category == category)
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn load_image(&self, entry: &ManifestEntry, resolution: usize) -> Result<ImageRecord> {
        ImageRecord::load(&self.resolve(&entry.image), &entry.id, &entry.category, resolution)
    }

    pub fn load_ground_truth(&self, entry: &ManifestEntry, resolution: usize) -> Result<Mask> {
        if entry.is_normal() {
            return Ok(Mask::empty(resolution, resolution));
        }
        load_mask(&self.resolve(Path::new(&entry.ground_truth)), resolution)
    }

    pub fn load_sample(&self, entry: &ManifestEntry, resolution: usize) -> Result<Sample> {
        Ok(Sample {
            image: self.load_image(entry, resolution)?,
            ground_truth: self.load_ground_truth(entry, resolution)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma, Rgb, RgbImage};

    fn write_rgb(path: &Path, w: u32, h: u32) {
        RgbImage::from_pixel(w, h, Rgb([10, 200, 30])).save(path).unwrap();
    }

    fn setup(dir: &Path) -> PathBuf {
        write_rgb(&dir.join("a.png"), 8, 8);
        write_rgb(&dir.join("b.png"), 8, 8);
        let mut m = GrayImage::new(4, 4);
        m.put_pixel(1, 1, Luma([7]));
        m.save(dir.join("a_mask.png")).unwrap();
        let doc = ManifestDocument::new(
            "tiny",
            ".",
            vec![
                ManifestEntry {
                    id: "a".into(),
                    category: "c".into(),
                    split: Split::Test,
                    image: "a.png".into(),
                    ground_truth: "a_mask.png".into(),
                },
                ManifestEntry {
                    id: "b".into(),
                    category: "c".into(),
                    split: Split::Test,
                    image: "b.png".into(),
                    ground_truth: "none".into(),
                },
            ],
        );
        let path = dir.join("manifest.json");
        doc.write(&path).unwrap();
        path
    }

    #[test]
    fn loads_entries_and_resizes_masks() {
        let dir = tempfile::tempdir().unwrap();
        let m = load_manifest(&setup(dir.path())).unwrap();
        assert_eq!(m.entries.len(), 2);
        let a = m.load_sample(&m.entries[0], 8).unwrap();
        assert_eq!(a.image.height(), 8);
        assert_eq!(a.image.original_size, (8, 8));
        assert_eq!(a.ground_truth.shape(), (8, 8));
        // 4x4 mask pixel (1,1) becomes a 2x2 block under nearest resize.
        assert_eq!(a.ground_truth.area(), 4);
        assert!(a.ground_truth.get(2, 2));
        let b = m.load_sample(&m.entries[1], 8).unwrap();
        assert!(b.ground_truth.is_empty());
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_manifest(&dir.path().join("nope.json")),
            Err(Error::ManifestNotFound(_))
        ));
        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, r#"{"schema_version": 1, "entries": 3}"#).unwrap();
        assert!(matches!(load_manifest(&bad), Err(Error::ManifestSchema(_))));

        let path = setup(dir.path());
        std::fs::write(dir.path().join("b.png"), b"not a png").unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::UnreadableImage { .. })));
        std::fs::remove_file(dir.path().join("b.png")).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::MissingFile(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = setup(dir.path());
        let text = std::fs::read_to_string(&path).unwrap().replace("\"b\"", "\"a\"");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::ManifestSchema(_))));
    }
}
