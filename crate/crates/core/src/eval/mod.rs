//! Dataset ingestion, the max-F1-pixel metric, evaluation and ablations.

pub mod layouts;
pub mod manifest;
pub mod metric;
pub mod report;
pub mod runner;

pub use manifest::{load_manifest, DatasetManifest, ManifestDocument, ManifestEntry, Sample, Split};
pub use metric::{max_f1_pixel, MaxF1, PixelPool, MAX_THRESHOLDS};
pub use report::{AblationRow, AblationTable, CategoryScore, EvalReport, RunMetadata, FULL_MODEL_LABEL};
pub use runner::{evaluate, evaluate_category, evaluate_with, predict_all, predict_entry, run_ablations, score_category};
